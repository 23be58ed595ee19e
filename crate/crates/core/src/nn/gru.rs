//! Gated recurrent unit with backpropagation through time.
//!
//! Gate convention (no biases, `h_0 = 0`):
//!
//! ```text
//! z  = σ(W_z x + U_z h)
//! r  = σ(W_r x + U_r h)
//! h̃  = tanh(W_h x + U_h (r ⊙ h))
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use super::activations::sigmoid;
use super::dense::{add_outer, check_len, Embedding};
use super::Params;
use crate::{Error, Result, TokenId};

#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    pub w_z: Array2<f64>,
    pub u_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub w_h: Array2<f64>,
    pub u_h: Array2<f64>,
}
crate::impl_params!(Gru { w_z, u_z, w_r, u_r, w_h, u_h });

/// Everything one cell step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct GruStep {
    pub input: Array1<f64>,
    pub prev: Array1<f64>,
    pub update: Array1<f64>,
    pub reset: Array1<f64>,
    pub candidate: Array1<f64>,
    pub state: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct GruTrace {
    pub initial: Array1<f64>,
    pub steps: Vec<GruStep>,
}

impl GruTrace {
    pub fn last_state(&self) -> &Array1<f64> {
        self.steps.last().map_or(&self.initial, |s| &s.state)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub struct GruGradients {
    pub inputs: Vec<Array1<f64>>,
    pub initial: Array1<f64>,
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Array2::zeros((hidden, input));
        let u = || Array2::zeros((hidden, hidden));
        Gru {
            w_z: w(),
            u_z: u(),
            w_r: w(),
            u_r: u(),
            w_h: w(),
            u_h: u(),
        }
    }

    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R, scale: f64) -> Self {
        let mut g = Self::zeros(input, hidden);
        g.init_uniform(rng, scale);
        g
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn initial_state(&self) -> Array1<f64> {
        Array1::zeros(self.hidden_dim())
    }

    /// Gate activations and next state; every forward path goes through here.
    fn gates(&self, x: ArrayView1<f64>, h: &Array1<f64>) -> [Array1<f64>; 4] {
        let (n, m) = (self.hidden_dim(), self.input_dim());
        assert!(x.len() == m && h.len() == n, "gru cell shapes");
        let x = x.as_standard_layout();
        let h = h.as_standard_layout();
        let (xs, hs) = (x.as_slice().expect("standard layout"), h.as_slice().expect("standard layout"));
        let [w_z, u_z, w_r, u_r, w_h, u_h] =
            [&self.w_z, &self.u_z, &self.w_r, &self.u_r, &self.w_h, &self.u_h].map(flat);
        let mut update = Array1::zeros(n);
        let mut reset = Array1::zeros(n);
        for i in 0..n {
            update[i] = sigmoid(dot(&w_z[i * m..(i + 1) * m], xs) + dot(&u_z[i * n..(i + 1) * n], hs));
            reset[i] = sigmoid(dot(&w_r[i * m..(i + 1) * m], xs) + dot(&u_r[i * n..(i + 1) * n], hs));
        }
        let gated: Vec<f64> = (0..n).map(|i| reset[i] * hs[i]).collect();
        let mut candidate = Array1::zeros(n);
        let mut state = Array1::zeros(n);
        for i in 0..n {
            let c = (dot(&w_h[i * m..(i + 1) * m], xs) + dot(&u_h[i * n..(i + 1) * n], &gated)).tanh();
            candidate[i] = c;
            state[i] = hs[i] + update[i] * (c - hs[i]);
        }
        [update, reset, candidate, state]
    }

    pub fn cell(&self, x: ArrayView1<f64>, h: &Array1<f64>) -> GruStep {
        let [update, reset, candidate, state] = self.gates(x, h);
        GruStep {
            input: x.to_owned(),
            prev: h.clone(),
            update,
            reset,
            candidate,
            state,
        }
    }

    /// One step without keeping the cache.
    pub fn step(&self, x: ArrayView1<f64>, h: &Array1<f64>) -> Array1<f64> {
        let [_, _, _, state] = self.gates(x, h);
        state
    }

    pub fn run<'a, I>(&self, inputs: I, initial: Array1<f64>) -> Result<GruTrace>
    where
        I: IntoIterator<Item = ArrayView1<'a, f64>>,
    {
        let mut steps: Vec<GruStep> = Vec::new();
        let mut h = initial.clone();
        for x in inputs {
            check_len("gru input", x.len(), self.input_dim())?;
            let step = self.cell(x, &h);
            h = step.state.clone();
            steps.push(step);
        }
        Ok(GruTrace { initial, steps })
    }

    /// Final state after reading `ids` from `h_0 = 0`.
    pub fn encode(&self, embedding: &Embedding, ids: &[TokenId]) -> Result<Array1<f64>> {
        self.encode_from(embedding, ids, self.initial_state())
    }

    /// Continues reading `ids` from an existing state.
    pub fn encode_from(&self, embedding: &Embedding, ids: &[TokenId], mut h: Array1<f64>) -> Result<Array1<f64>> {
        check_len("gru embedding", embedding.dim(), self.input_dim())?;
        for &id in ids {
            h = self.step(embedding.lookup(id)?, &h);
        }
        Ok(h)
    }

    pub fn encode_traced(&self, embedding: &Embedding, ids: &[TokenId]) -> Result<GruTrace> {
        if ids.is_empty() {
            return Err(Error::Empty("gru_encode needs at least one token"));
        }
        check_len("gru embedding", embedding.dim(), self.input_dim())?;
        let rows = ids.iter().map(|&id| embedding.lookup(id)).collect::<Result<Vec<_>>>()?;
        self.run(rows, self.initial_state())
    }

    /// Backpropagation through time.
    ///
    /// `d_final` is the gradient on the last state; `d_states`, when given,
    /// adds a gradient on every step's state (same length as the trace).
    pub fn backward(
        &self,
        trace: &GruTrace,
        d_final: &Array1<f64>,
        d_states: Option<&[Array1<f64>]>,
        grads: &mut Gru,
    ) -> GruGradients {
        let n = trace.steps.len();
        let mut d_h = d_final.clone();
        let mut inputs = vec![Array1::zeros(0); n];
        for t in (0..n).rev() {
            if let Some(extra) = d_states {
                d_h += &extra[t];
            }
            let s = &trace.steps[t];
            let (d_x, d_prev) = self.cell_backward(s, &d_h, grads);
            inputs[t] = d_x;
            d_h = d_prev;
        }
        GruGradients { inputs, initial: d_h }
    }

    fn cell_backward(&self, s: &GruStep, d_state: &Array1<f64>, grads: &mut Gru) -> (Array1<f64>, Array1<f64>) {
        let d_update = d_state * &(&s.candidate - &s.prev);
        let d_candidate = d_state * &s.update;
        let mut d_prev = d_state * &s.update.mapv(|z| 1.0 - z);

        let d_cand_pre = &d_candidate * &s.candidate.mapv(|c| 1.0 - c * c);
        let gated = &s.reset * &s.prev;
        add_outer(&mut grads.w_h, d_cand_pre.view(), s.input.view());
        add_outer(&mut grads.u_h, d_cand_pre.view(), gated.view());
        let d_gated = self.u_h.t().dot(&d_cand_pre);
        let d_reset = &d_gated * &s.prev;
        d_prev += &(&d_gated * &s.reset);

        let d_update_pre = &d_update * &s.update.mapv(|z| z * (1.0 - z));
        add_outer(&mut grads.w_z, d_update_pre.view(), s.input.view());
        add_outer(&mut grads.u_z, d_update_pre.view(), s.prev.view());
        d_prev += &self.u_z.t().dot(&d_update_pre);

        let d_reset_pre = &d_reset * &s.reset.mapv(|r| r * (1.0 - r));
        add_outer(&mut grads.w_r, d_reset_pre.view(), s.input.view());
        add_outer(&mut grads.u_r, d_reset_pre.view(), s.prev.view());
        d_prev += &self.u_r.t().dot(&d_reset_pre);

        let d_x = self.w_z.t().dot(&d_update_pre) + self.w_r.t().dot(&d_reset_pre) + self.w_h.t().dot(&d_cand_pre);
        (d_x, d_prev)
    }

    /// Backward pass for a token encoder: input gradients land on the
    /// embedding rows that were read.
    pub fn backward_tokens(
        &self,
        trace: &GruTrace,
        ids: &[TokenId],
        d_final: &Array1<f64>,
        grads: &mut Gru,
        embedding_grads: Option<&mut Embedding>,
    ) {
        let g = self.backward(trace, d_final, None, grads);
        if let Some(emb) = embedding_grads {
            for (&id, d_x) in ids.iter().zip(&g.inputs) {
                emb.accumulate(id, d_x);
            }
        }
    }
}

fn flat(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("gru weights are contiguous")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Sentence-level GRU over per-sentence token-GRU encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct HierGru {
    pub sentence: Gru,
    pub document: Gru,
}
crate::impl_params!(HierGru { sentence, document });

#[derive(Clone, Debug)]
pub struct HierTrace {
    pub sentences: Vec<GruTrace>,
    pub document: GruTrace,
}

impl HierGru {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R, scale: f64) -> Self {
        HierGru {
            sentence: Gru::new(input, hidden, rng, scale),
            document: Gru::new(hidden, hidden, rng, scale),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        HierGru {
            sentence: Gru::zeros(input, hidden),
            document: Gru::zeros(hidden, hidden),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.document.hidden_dim()
    }

    pub fn encode<S: AsRef<[TokenId]>>(&self, embedding: &Embedding, sentences: &[S]) -> Result<Array1<f64>> {
        if sentences.is_empty() {
            return Err(Error::Empty("hier_encode needs at least one sentence"));
        }
        let mut h = self.document.initial_state();
        for s in sentences {
            let e = self.sentence.encode(embedding, s.as_ref())?;
            h = self.document.step(e.view(), &h);
        }
        Ok(h)
    }

    pub fn encode_traced<S: AsRef<[TokenId]>>(&self, embedding: &Embedding, sentences: &[S]) -> Result<HierTrace> {
        if sentences.is_empty() {
            return Err(Error::Empty("hier_encode needs at least one sentence"));
        }
        let sentence_traces = sentences
            .iter()
            .map(|s| self.sentence.encode_traced(embedding, s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let document = self.document.run(
            sentence_traces.iter().map(|t| t.last_state().view()),
            self.document.initial_state(),
        )?;
        Ok(HierTrace {
            sentences: sentence_traces,
            document,
        })
    }

    pub fn backward<S: AsRef<[TokenId]>>(
        &self,
        trace: &HierTrace,
        sentences: &[S],
        d_final: &Array1<f64>,
        grads: &mut HierGru,
        mut embedding_grads: Option<&mut Embedding>,
    ) {
        let doc = self.document.backward(&trace.document, d_final, None, &mut grads.document);
        for ((t, ids), d) in trace.sentences.iter().zip(sentences).zip(&doc.inputs) {
            self.sentence
                .backward_tokens(t, ids.as_ref(), d, &mut grads.sentence, embedding_grads.as_deref_mut());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn setup() -> (Gru, Embedding) {
        let mut rng = stream(5, Stream::Init);
        (Gru::new(3, 4, &mut rng, 0.5), Embedding::new(10, 3, &mut rng, 0.5))
    }

    #[test]
    fn zero_parameters_give_zero_state() {
        let g = Gru::zeros(3, 4);
        let (_, emb) = setup();
        let h = g.encode(&emb, &[1, 5, 7, 2]).unwrap();
        assert!(h.iter().all(|&x| x == 0.0));
        let hier = HierGru::zeros(3, 4);
        assert!(hier.encode(&emb, &[vec![1, 2], vec![3]]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_token_is_one_cell_step() {
        let (g, emb) = setup();
        let enc = g.encode(&emb, &[4]).unwrap();
        let step = g.step(emb.lookup(4).unwrap(), &g.initial_state());
        assert_eq!(enc, step);
        assert_eq!(enc.len(), 4);
        assert_eq!(g.encode(&emb, &[1, 2, 3, 4, 5, 6]).unwrap().len(), 4);
    }

    #[test]
    fn empty_inputs_rejected() {
        let (g, emb) = setup();
        assert!(g.encode_traced(&emb, &[]).is_err());
        let mut rng = stream(5, Stream::Init);
        let hier = HierGru::new(3, 4, &mut rng, 0.5);
        assert!(hier.encode::<Vec<TokenId>>(&emb, &[]).is_err());
        assert!(g.encode(&emb, &[99]).is_err());
    }

    #[test]
    fn hier_single_sentence_and_order() {
        let mut rng = stream(6, Stream::Init);
        let hier = HierGru::new(3, 4, &mut rng, 0.8);
        let emb = Embedding::new(10, 3, &mut rng, 0.8);
        let one = hier.encode(&emb, &[vec![1, 2, 3]]).unwrap();
        let inner = hier.sentence.encode(&emb, &[1, 2, 3]).unwrap();
        assert_eq!(one, hier.document.step(inner.view(), &hier.document.initial_state()));
        let ab = hier.encode(&emb, &[vec![1, 2], vec![7, 8, 9]]).unwrap();
        let ba = hier.encode(&emb, &[vec![7, 8, 9], vec![1, 2]]).unwrap();
        assert_ne!(ab, ba);
        let traced = hier.encode_traced(&emb, &[vec![1, 2], vec![7, 8, 9]]).unwrap();
        assert_eq!(traced.document.last_state(), &ab);
    }

    #[test]
    fn traced_matches_untraced() {
        let (g, emb) = setup();
        let ids = [1, 4, 2, 9];
        assert_eq!(g.encode_traced(&emb, &ids).unwrap().last_state(), &g.encode(&emb, &ids).unwrap());
        let half = g.encode(&emb, &ids[..2]).unwrap();
        assert_eq!(g.encode_from(&emb, &ids[2..], half).unwrap(), g.encode(&emb, &ids).unwrap());
    }
}
