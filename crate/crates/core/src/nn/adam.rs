use super::Params;
use crate::{Error, Result};

/// Adaptive moment estimation over a flattened parameter set.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, num_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn for_params<P: Params>(lr: f64, params: &P) -> Self {
        Self::new(lr, params.num_params())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn num_params(&self) -> usize {
        self.first.len()
    }

    /// One descent step on `params` along `grad`. Rejects non-finite
    /// gradients without touching anything.
    pub fn step<P: Params>(&mut self, params: &mut P, grad: &P) -> Result<()> {
        let g = grad.to_flat();
        if g.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, gradient has {}",
                self.first.len(),
                g.len()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut p = params.to_flat();
        for i in 0..p.len() {
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g[i];
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        params.set_flat(&p);
        Ok(())
    }
}
