use crate::exec::{self, Execution};
use crate::generation::{KnowledgePrior, PriorFeatures, Selector};
use crate::nn::Params;
use crate::{Error, Result};

/// Largest tolerated gap between a stored and a replayed log-probability.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

/// A stochastic knowledge-selection policy with a differentiable log-prior.
pub trait SelectionPolicy: Sync {
    /// Everything one decision conditions on.
    type Features: Send + Sync;
    type Grad: Params + Send;

    fn prior(&self, features: &Self::Features) -> Result<KnowledgePrior>;

    /// `ln p(index)` and its gradient with respect to the policy parameters.
    fn grad_log_prior(&self, features: &Self::Features, index: usize) -> Result<(f64, Self::Grad)>;

    fn zero_grad(&self) -> Self::Grad;
}

impl SelectionPolicy for Selector {
    type Features = PriorFeatures;
    type Grad = Selector;

    fn prior(&self, features: &PriorFeatures) -> Result<KnowledgePrior> {
        Selector::prior(self, features)
    }

    fn grad_log_prior(&self, features: &PriorFeatures, index: usize) -> Result<(f64, Selector)> {
        self.log_prior_gradient(features, index)
    }

    fn zero_grad(&self) -> Selector {
        self.zeros_like()
    }
}

/// One selection made during a rollout.
#[derive(Clone, Debug)]
pub struct Decision<F> {
    pub features: F,
    pub index: usize,
    pub log_prob: f64,
}

/// The decisions of one trajectory and its advantage `R(τ) − b`.
#[derive(Debug)]
pub struct Episode<'a, F> {
    pub decisions: &'a [Decision<F>],
    pub advantage: f64,
}

impl<F> Clone for Episode<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F> Copy for Episode<'_, F> {}

/// `(1/N) Σ_j (R_j − b_j) Σ_t ∇ ln p(z_t | c_t)`, the ascent direction.
///
/// Every stored log-probability is replayed against the current policy and
/// must agree within [`REPLAY_TOLERANCE`].
pub fn policy_gradient<P: SelectionPolicy>(
    policy: &P,
    episodes: &[Episode<P::Features>],
    execution: Execution,
) -> Result<P::Grad> {
    if episodes.is_empty() {
        return Err(Error::Empty("policy gradient needs at least one trajectory"));
    }
    if let Some(e) = episodes.iter().find(|e| !e.advantage.is_finite()) {
        return Err(Error::NonFinite(format!("advantage {}", e.advantage)));
    }
    let parts = exec::try_map(execution, episodes.to_vec(), |episode| -> Result<Option<P::Grad>> {
        let mut acc: Option<P::Grad> = None;
        for (t, d) in episode.decisions.iter().enumerate() {
            let (log_p, g) = policy.grad_log_prior(&d.features, d.index).map_err(|e| Error::at_turn(t + 1, e))?;
            if (log_p - d.log_prob).abs() > REPLAY_TOLERANCE {
                return Err(Error::at_turn(
                    t + 1,
                    Error::InvalidArgument(format!("replayed log-prob {log_p} differs from stored {}", d.log_prob)),
                ));
            }
            if episode.advantage != 0.0 {
                match acc.as_mut() {
                    Some(a) => a.add_scaled(&g, 1.0),
                    None => acc = Some(g),
                }
            }
        }
        Ok(acc.map(|mut a| {
            a.scale(episode.advantage);
            a
        }))
    })?;
    let mut grad = policy.zero_grad();
    let weight = 1.0 / episodes.len() as f64;
    for g in parts.iter().flatten() {
        grad.add_scaled(g, weight);
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("policy gradient".into()));
    }
    Ok(grad)
}
