use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use super::activations::sigmoid;
use super::Params;
use crate::{Error, Result, TokenId};

/// `m += a ⊗ b`.
pub(crate) fn add_outer(m: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (mut row, &ai) in m.rows_mut().into_iter().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, &b);
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: expected length {want}, got {got}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub table: Array2<f64>,
}
crate::impl_params!(Embedding { table });

impl Embedding {
    pub fn new<R: Rng + ?Sized>(vocab: usize, dim: usize, rng: &mut R, scale: f64) -> Self {
        let mut e = Embedding {
            table: Array2::zeros((vocab, dim)),
        };
        e.init_uniform(rng, scale);
        e
    }

    pub fn vocab_size(&self) -> usize {
        self.table.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    pub fn lookup(&self, id: TokenId) -> Result<ArrayView1<'_, f64>> {
        if (id as usize) < self.table.nrows() {
            Ok(self.table.row(id as usize))
        } else {
            Err(Error::Shape(format!(
                "token id {id} outside embedding table of {}",
                self.table.nrows()
            )))
        }
    }

    pub fn accumulate(&mut self, id: TokenId, grad: &Array1<f64>) {
        self.table.row_mut(id as usize).scaled_add(1.0, grad);
    }
}

/// `W x + b` with `W` stored as (out, in).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}
crate::impl_params!(Linear { weight, bias });

impl Linear {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R, scale: f64) -> Self {
        let mut l = Linear {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        };
        l.init_uniform(rng, scale);
        l
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView1<f64>, d_out: &Array1<f64>, grads: &mut Linear) -> Array1<f64> {
        add_outer(&mut grads.weight, d_out.view(), x);
        grads.bias += d_out;
        self.weight.t().dot(d_out)
    }
}

/// Two-layer perceptron `σ(x W1 + b1) W2 + b2` in row-vector convention.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp2 {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}
crate::impl_params!(Mlp2 { w1, b1, w2, b2 });

#[derive(Clone, Debug)]
pub struct Mlp2Trace {
    pub input: Array1<f64>,
    pub hidden: Array1<f64>,
    pub output: Array1<f64>,
}

impl Mlp2 {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp2 {
            w1: Array2::zeros((input, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, output)),
            b2: Array1::zeros(output),
        }
    }

    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R, scale: f64) -> Self {
        let mut m = Self::zeros(input, hidden, output);
        m.init_uniform(rng, scale);
        m
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn trace(&self, x: ArrayView1<f64>) -> Result<Mlp2Trace> {
        check_len("mlp2 input", x.len(), self.w1.nrows())?;
        let hidden = (x.dot(&self.w1) + &self.b1).mapv(sigmoid);
        let output = hidden.dot(&self.w2) + &self.b2;
        Ok(Mlp2Trace {
            input: x.to_owned(),
            hidden,
            output,
        })
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.trace(x)?.output)
    }

    pub fn backward(&self, trace: &Mlp2Trace, d_out: &Array1<f64>, grads: &mut Mlp2) -> Array1<f64> {
        add_outer(&mut grads.w2, trace.hidden.view(), d_out.view());
        grads.b2 += d_out;
        let d_hidden = self.w2.dot(d_out);
        let d_pre = &d_hidden * &trace.hidden.mapv(|h| h * (1.0 - h));
        add_outer(&mut grads.w1, trace.input.view(), d_pre.view());
        grads.b1 += &d_pre;
        self.w1.dot(&d_pre)
    }
}

/// Additive attention score `V1ᵀ tanh(x W1 + y W2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpAttention {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub v1: Array1<f64>,
}
crate::impl_params!(MlpAttention { w1, w2, v1 });

#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub query: Array1<f64>,
    pub key: Array1<f64>,
    pub activation: Array1<f64>,
    pub score: f64,
}

impl MlpAttention {
    pub fn zeros(dim: usize) -> Self {
        MlpAttention {
            w1: Array2::zeros((dim, dim)),
            w2: Array2::zeros((dim, dim)),
            v1: Array1::zeros(dim),
        }
    }

    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R, scale: f64) -> Self {
        let mut a = Self::zeros(dim);
        a.init_uniform(rng, scale);
        a
    }

    pub fn trace(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<AttentionTrace> {
        check_len("attention query", x.len(), self.w1.nrows())?;
        check_len("attention key", y.len(), self.w2.nrows())?;
        let activation = (x.dot(&self.w1) + y.dot(&self.w2)).mapv(f64::tanh);
        let score = self.v1.dot(&activation);
        Ok(AttentionTrace {
            query: x.to_owned(),
            key: y.to_owned(),
            activation,
            score,
        })
    }

    pub fn score(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        check_len("attention query", x.len(), self.w1.nrows())?;
        check_len("attention key", y.len(), self.w2.nrows())?;
        let activation = (x.dot(&self.w1) + y.dot(&self.w2)).mapv(f64::tanh);
        Ok(self.v1.dot(&activation))
    }

    /// Returns `(dL/dx, dL/dy)`.
    pub fn backward(&self, trace: &AttentionTrace, d_score: f64, grads: &mut MlpAttention) -> (Array1<f64>, Array1<f64>) {
        grads.v1.scaled_add(d_score, &trace.activation);
        let d_pre = trace
            .activation
            .iter()
            .zip(self.v1.iter())
            .map(|(t, v)| d_score * v * (1.0 - t * t))
            .collect::<Array1<f64>>();
        add_outer(&mut grads.w1, trace.query.view(), d_pre.view());
        add_outer(&mut grads.w2, trace.key.view(), d_pre.view());
        (self.w1.dot(&d_pre), self.w2.dot(&d_pre))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn attention_examples() {
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Init);
        let att = MlpAttention::new(4, &mut rng, 0.5);
        let zero = Array1::zeros(4);
        assert_eq!(att.score(zero.view(), zero.view()).unwrap(), 0.0);

        let mut silent = att.clone();
        silent.v1.fill(0.0);
        let x = array![0.3, -1.0, 2.0, 0.1];
        assert_eq!(silent.score(x.view(), x.view()).unwrap(), 0.0);

        let one = MlpAttention {
            w1: array![[1.0]],
            w2: array![[1.0]],
            v1: array![1.0],
        };
        let s = one.score(array![0.5].view(), array![0.5].view()).unwrap();
        assert!((s - 1f64.tanh()).abs() < 1e-15);
        assert!((s - 0.7616).abs() < 1e-4);

        assert!(att.score(array![1.0].view(), zero.view()).is_err());
    }

    #[test]
    fn mlp2_examples() {
        let m = Mlp2::zeros(3, 4, 2);
        assert_eq!(m.forward(array![1.0, 2.0, 3.0].view()).unwrap(), array![0.0, 0.0]);

        let mut rng = crate::rng::stream(1, crate::rng::Stream::Init);
        let m = Mlp2::new(3, 4, 2, &mut rng, 0.5);
        let at_zero = m.forward(Array1::zeros(3).view()).unwrap();
        let expected = m.b1.mapv(sigmoid).dot(&m.w2) + &m.b2;
        assert_eq!(at_zero, expected);
        assert_eq!(at_zero.len(), m.output_dim());
        assert!(m.forward(array![1.0].view()).is_err());
    }
}
