use ndarray::{concatenate, Array1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{GenerationModel, KnowledgeEncoding};
use crate::corpus::{BOS, EOS, PAD, UNK};
use crate::nn::softmax;
use crate::{Error, Result, TokenId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Sample,
}

impl GenerationModel {
    /// `tanh(bridge([z; u]))`.
    pub fn decoder_initial_state(&self, z: &Array1<f64>, u: &Array1<f64>) -> Array1<f64> {
        let cat = concatenate(Axis(0), &[z.view(), u.view()]).expect("equal-rank vectors");
        self.backbone.decoder.bridge.forward(cat.view()).mapv(f64::tanh)
    }

    /// Generates a response grounded in entry `z_index`, stopping at EOS
    /// (not included) or after `max_len` tokens.
    pub fn decode_response<R: Rng + ?Sized>(
        &self,
        knowledge: &KnowledgeEncoding,
        z_index: usize,
        u_prev: &[TokenId],
        max_len: usize,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<Vec<TokenId>> {
        let z = knowledge.vectors.get(z_index).ok_or_else(|| {
            Error::InvalidArgument(format!("knowledge index {z_index} outside 0..{}", knowledge.len()))
        })?;
        let u = self.encode_utterance(u_prev)?;
        self.decode_from_state(self.decoder_initial_state(z, &u), max_len, mode, rng)
    }

    pub fn decode_from_state<R: Rng + ?Sized>(
        &self,
        initial: Array1<f64>,
        max_len: usize,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<Vec<TokenId>> {
        if max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        let dec = &self.backbone.decoder;
        let emb = &self.backbone.embedding;
        let mut h = initial;
        let mut prev = BOS;
        let mut out = Vec::new();
        while out.len() < max_len {
            h = dec.cell.step(emb.lookup(prev)?, &h);
            let mut logits = dec.output.forward(h.view());
            for id in [PAD, BOS, UNK] {
                logits[id as usize] = f64::NEG_INFINITY;
            }
            if out.is_empty() {
                logits[EOS as usize] = f64::NEG_INFINITY;
            }
            let next = match mode {
                DecodeMode::Greedy => argmax(&logits),
                DecodeMode::Sample => sample_logits(&logits, rng)?,
            };
            if next == EOS {
                break;
            }
            out.push(next);
            prev = next;
        }
        Ok(out)
    }
}

fn argmax(logits: &Array1<f64>) -> TokenId {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best as TokenId
}

fn sample_logits<R: Rng + ?Sized>(logits: &Array1<f64>, rng: &mut R) -> Result<TokenId> {
    let allowed: Vec<usize> = (0..logits.len()).filter(|&i| logits[i].is_finite()).collect();
    let probs = softmax(&allowed.iter().map(|&i| logits[i]).collect::<Vec<_>>())?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(allowed[k] as TokenId);
        }
    }
    Ok(*allowed.last().expect("non-empty") as TokenId)
}
