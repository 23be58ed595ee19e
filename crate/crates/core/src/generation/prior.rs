use std::sync::Arc;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{GenerationModel, KnowledgeEncoding, Selector};
use crate::nn::{softmax, Params};
use crate::{Error, Result, TokenId};

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability distribution over one participant's knowledge entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgePrior {
    probs: Vec<f64>,
}

impl KnowledgePrior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("knowledge prior"));
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("knowledge prior".into()));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument("negative prior probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("prior sums to {sum}")));
        }
        Ok(KnowledgePrior { probs })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Empty("knowledge prior"));
        }
        Ok(KnowledgePrior {
            probs: vec![1.0 / m as f64; m],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn log_prob(&self, index: usize) -> Result<f64> {
        self.probs
            .get(index)
            .map(|p| p.ln())
            .ok_or_else(|| Error::InvalidArgument(format!("index {index} outside prior of size {}", self.len())))
    }
}

/// Equal-weight mixture of the utterance branch and the context branch;
/// a missing context branch counts as uniform.
pub fn mix_branches(utterance: &[f64], context: Option<&[f64]>) -> Result<KnowledgePrior> {
    let m = utterance.len();
    let uniform = vec![1.0 / m.max(1) as f64; m];
    let context = context.unwrap_or(&uniform);
    if context.len() != m {
        return Err(Error::Shape(format!("branch sizes {m} and {}", context.len())));
    }
    KnowledgePrior::new(utterance.iter().zip(context).map(|(a, b)| 0.5 * a + 0.5 * b).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    #[default]
    Sample,
    Greedy,
}

pub fn select_knowledge<R: Rng + ?Sized>(
    prior: &KnowledgePrior,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<(usize, f64)> {
    let probs = prior.probs();
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::NonFinite("knowledge prior".into()));
    }
    let index = match mode {
        SelectionMode::Greedy => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            best
        }
        SelectionMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
        }
    };
    Ok((index, probs[index].ln()))
}

/// Encoded inputs of one selection step.
#[derive(Clone, Debug)]
pub struct PriorFeatures {
    pub knowledge: Arc<KnowledgeEncoding>,
    pub utterance: Array1<f64>,
    pub context: Option<Array1<f64>>,
}

impl Selector {
    fn branch_scores(&self, which: Branch, features: &PriorFeatures) -> Result<Vec<f64>> {
        let (att, x) = match which {
            Branch::Utterance => (&self.utterance, &features.utterance),
            Branch::Context => (&self.context, features.context.as_ref().expect("context branch")),
        };
        features
            .knowledge
            .vectors
            .iter()
            .map(|z| att.score(x.view(), z.view()))
            .collect()
    }

    pub fn prior(&self, features: &PriorFeatures) -> Result<KnowledgePrior> {
        if features.knowledge.is_empty() {
            return Err(Error::Empty("knowledge set"));
        }
        let pu = softmax(&self.branch_scores(Branch::Utterance, features)?)?;
        let pc = match features.context {
            Some(_) => Some(softmax(&self.branch_scores(Branch::Context, features)?)?),
            None => None,
        };
        mix_branches(&pu, pc.as_deref())
    }

    /// `ln p(z_index)` and its gradient with respect to the selector.
    pub fn log_prior_gradient(&self, features: &PriorFeatures, index: usize) -> Result<(f64, Selector)> {
        let prior = self.prior(features)?;
        let p = prior.probs()[index.min(prior.len() - 1)];
        let log_p = prior.log_prob(index)?;
        let mut grads = self.zeros_like();
        let mut branch = |which: Branch, weight: f64| -> Result<()> {
            let scores = self.branch_scores(which, features)?;
            let q = softmax(&scores)?;
            let (att, grad_att, x) = match which {
                Branch::Utterance => (&self.utterance, &mut grads.utterance, &features.utterance),
                Branch::Context => (
                    &self.context,
                    &mut grads.context,
                    features.context.as_ref().expect("context branch"),
                ),
            };
            for (j, z) in features.knowledge.vectors.iter().enumerate() {
                let delta = if j == index { 1.0 } else { 0.0 };
                let d_score = weight * q[index] * (delta - q[j]) / p;
                if d_score != 0.0 {
                    let trace = att.trace(x.view(), z.view())?;
                    att.backward(&trace, d_score, grad_att);
                }
            }
            Ok(())
        };
        branch(Branch::Utterance, 0.5)?;
        if features.context.is_some() {
            branch(Branch::Context, 0.5)?;
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("selector gradient".into()));
        }
        Ok((log_p, grads))
    }
}

#[derive(Clone, Copy)]
enum Branch {
    Utterance,
    Context,
}

impl GenerationModel {
    pub fn prior_features(
        &self,
        knowledge: &Arc<KnowledgeEncoding>,
        u_prev: &[TokenId],
        c_prev: &[TokenId],
    ) -> Result<PriorFeatures> {
        Ok(PriorFeatures {
            knowledge: Arc::clone(knowledge),
            utterance: self.encode_utterance(u_prev)?,
            context: self.encode_context(c_prev)?,
        })
    }

    /// `p(Z | c_t)` for the last utterance and the history before it.
    pub fn knowledge_prior(
        &self,
        knowledge: &Arc<KnowledgeEncoding>,
        u_prev: &[TokenId],
        c_prev: &[TokenId],
    ) -> Result<KnowledgePrior> {
        self.selector.prior(&self.prior_features(knowledge, u_prev, c_prev)?)
    }
}
