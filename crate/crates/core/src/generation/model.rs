use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Checkpoint, Embedding, Gru, Linear, MlpAttention, Params, INIT_SCALE};
use crate::{Error, Result, TokenId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Embedding,
    KnowledgeEncoder,
    UtteranceEncoder,
    ContextEncoder,
    Selector,
    Decoder,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Embedding,
        ParamGroup::KnowledgeEncoder,
        ParamGroup::UtteranceEncoder,
        ParamGroup::ContextEncoder,
        ParamGroup::Selector,
        ParamGroup::Decoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Embedding => "embedding",
            ParamGroup::KnowledgeEncoder => "knowledge_encoder",
            ParamGroup::UtteranceEncoder => "utterance_encoder",
            ParamGroup::ContextEncoder => "context_encoder",
            ParamGroup::Selector => "selector",
            ParamGroup::Decoder => "decoder",
        }
    }
}

/// Response decoder: a GRU whose initial state is `tanh(bridge([z; u]))`,
/// plus the bag-of-words head used only as a pre-training auxiliary.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub bridge: Linear,
    pub cell: Gru,
    pub output: Linear,
    pub bag_of_words: Linear,
}
crate::impl_params!(Decoder { bridge, cell, output, bag_of_words });

/// The supervised part of the model: everything pre-training updates.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub embedding: Embedding,
    pub knowledge_encoder: Gru,
    pub utterance_encoder: Gru,
    pub decoder: Decoder,
}
crate::impl_params!(Backbone { embedding, knowledge_encoder, utterance_encoder, decoder });

/// Knowledge-selection strategy: one additive-attention scorer per branch.
#[derive(Clone, Debug, PartialEq)]
pub struct Selector {
    pub utterance: MlpAttention,
    pub context: MlpAttention,
}
crate::impl_params!(Selector { utterance, context });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub dim: usize,
    pub vocab_size: usize,
    pub frozen: Vec<ParamGroup>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationModel {
    pub backbone: Backbone,
    pub context_encoder: Gru,
    pub selector: Selector,
    trainable: BTreeSet<ParamGroup>,
}

impl GenerationModel {
    /// Fresh model with every group trainable, initialized uniformly in
    /// `(−0.08, 0.08)`.
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let ModelDims { vocab_size: v, dim: d } = dims;
        let s = INIT_SCALE;
        let backbone = Backbone {
            embedding: Embedding::new(v, d, rng, s),
            knowledge_encoder: Gru::new(d, d, rng, s),
            utterance_encoder: Gru::new(d, d, rng, s),
            decoder: Decoder {
                bridge: Linear::new(2 * d, d, rng, s),
                cell: Gru::new(d, d, rng, s),
                output: Linear::new(d, v, rng, s),
                bag_of_words: Linear::new(d, v, rng, s),
            },
        };
        let context_encoder = Gru::new(d, d, rng, s);
        let selector = Selector {
            utterance: MlpAttention::new(d, rng, s),
            context: MlpAttention::new(d, rng, s),
        };
        GenerationModel {
            backbone,
            context_encoder,
            selector,
            trainable: ParamGroup::ALL.into_iter().collect(),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.backbone.embedding.vocab_size(),
            dim: self.backbone.embedding.dim(),
        }
    }

    pub fn is_trainable(&self, group: ParamGroup) -> bool {
        self.trainable.contains(&group)
    }

    pub fn frozen_groups(&self) -> Vec<ParamGroup> {
        ParamGroup::ALL.into_iter().filter(|g| !self.is_trainable(*g)).collect()
    }

    /// Ends supervised training: the context encoder starts as a copy of the
    /// utterance encoder and everything but the selector is frozen.
    pub fn freeze_for_reinforcement(&mut self) {
        self.context_encoder = self.backbone.utterance_encoder.clone();
        self.trainable = [ParamGroup::Selector].into_iter().collect();
    }

    pub fn is_frozen_for_reinforcement(&self) -> bool {
        self.trainable.len() == 1 && self.is_trainable(ParamGroup::Selector)
    }

    pub fn manifest(&self) -> ModelManifest {
        let dims = self.dims();
        ModelManifest {
            dim: dims.dim,
            vocab_size: dims.vocab_size,
            frozen: self.frozen_groups(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        let b = &self.backbone;
        let t = |g| self.is_trainable(g);
        ckpt.insert(ParamGroup::Embedding.name(), t(ParamGroup::Embedding), &b.embedding);
        ckpt.insert(ParamGroup::KnowledgeEncoder.name(), t(ParamGroup::KnowledgeEncoder), &b.knowledge_encoder);
        ckpt.insert(ParamGroup::UtteranceEncoder.name(), t(ParamGroup::UtteranceEncoder), &b.utterance_encoder);
        ckpt.insert(ParamGroup::ContextEncoder.name(), t(ParamGroup::ContextEncoder), &self.context_encoder);
        ckpt.insert(ParamGroup::Selector.name(), t(ParamGroup::Selector), &self.selector);
        ckpt.insert(ParamGroup::Decoder.name(), t(ParamGroup::Decoder), &b.decoder);
        ckpt.metadata.insert(
            "model".into(),
            serde_json::to_value(self.manifest()).expect("manifest serializes"),
        );
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let manifest: ModelManifest = serde_json::from_value(
            ckpt.metadata
                .get("model")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("missing model manifest".into()))?,
        )?;
        let dims = ModelDims {
            vocab_size: manifest.vocab_size,
            dim: manifest.dim,
        };
        let mut model = GenerationModel::new(dims, &mut crate::rng::stream(0, crate::rng::Stream::Init));
        let mut trainable = BTreeSet::new();
        let mut load = |group: ParamGroup, trainable_flag: bool| {
            if trainable_flag {
                trainable.insert(group);
            }
        };
        let b = &mut model.backbone;
        load(ParamGroup::Embedding, ckpt.restore(ParamGroup::Embedding.name(), &mut b.embedding)?);
        load(
            ParamGroup::KnowledgeEncoder,
            ckpt.restore(ParamGroup::KnowledgeEncoder.name(), &mut b.knowledge_encoder)?,
        );
        load(
            ParamGroup::UtteranceEncoder,
            ckpt.restore(ParamGroup::UtteranceEncoder.name(), &mut b.utterance_encoder)?,
        );
        load(ParamGroup::Decoder, ckpt.restore(ParamGroup::Decoder.name(), &mut b.decoder)?);
        load(
            ParamGroup::ContextEncoder,
            ckpt.restore(ParamGroup::ContextEncoder.name(), &mut model.context_encoder)?,
        );
        load(ParamGroup::Selector, ckpt.restore(ParamGroup::Selector.name(), &mut model.selector)?);
        model.trainable = trainable;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Flat parameter values per group, for freeze-contract comparisons.
    pub fn group_values(&self) -> BTreeMap<ParamGroup, Vec<f64>> {
        let b = &self.backbone;
        BTreeMap::from([
            (ParamGroup::Embedding, b.embedding.to_flat()),
            (ParamGroup::KnowledgeEncoder, b.knowledge_encoder.to_flat()),
            (ParamGroup::UtteranceEncoder, b.utterance_encoder.to_flat()),
            (ParamGroup::ContextEncoder, self.context_encoder.to_flat()),
            (ParamGroup::Selector, self.selector.to_flat()),
            (ParamGroup::Decoder, b.decoder.to_flat()),
        ])
    }

    pub fn encode_utterance(&self, ids: &[TokenId]) -> Result<Array1<f64>> {
        if ids.is_empty() {
            return Err(Error::Empty("utterance"));
        }
        self.backbone.utterance_encoder.encode(&self.backbone.embedding, ids)
    }

    /// `None` for an empty history.
    pub fn encode_context(&self, ids: &[TokenId]) -> Result<Option<Array1<f64>>> {
        if ids.is_empty() {
            return Ok(None);
        }
        self.context_encoder.encode(&self.backbone.embedding, ids).map(Some)
    }

    pub fn encode_knowledge<S: AsRef<[TokenId]>>(&self, entries: &[S]) -> Result<KnowledgeEncoding> {
        if entries.is_empty() {
            return Err(Error::Empty("knowledge set"));
        }
        let vectors = entries
            .iter()
            .map(|e| {
                let e = e.as_ref();
                if e.is_empty() {
                    return Err(Error::Empty("knowledge entry"));
                }
                self.backbone.knowledge_encoder.encode(&self.backbone.embedding, e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KnowledgeEncoding { vectors })
    }
}

/// Encoded background `{z_1^G .. z_M^G}`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeEncoding {
    pub vectors: Vec<Array1<f64>>,
}

impl KnowledgeEncoding {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn checkpoint_round_trip_keeps_flags() {
        let mut m = GenerationModel::new(ModelDims { vocab_size: 12, dim: 4 }, &mut stream(1, Stream::Init));
        m.freeze_for_reinforcement();
        assert_eq!(m.context_encoder, m.backbone.utterance_encoder);
        let back = GenerationModel::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back, m);
        assert!(back.is_frozen_for_reinforcement());
        assert_eq!(back.manifest().frozen.len(), 5);
    }

    #[test]
    fn empty_history_has_no_context() {
        let m = GenerationModel::new(ModelDims { vocab_size: 12, dim: 4 }, &mut stream(1, Stream::Init));
        assert!(m.encode_context(&[]).unwrap().is_none());
        assert!(m.encode_utterance(&[]).is_err());
        assert!(m.encode_knowledge::<Vec<TokenId>>(&[]).is_err());
    }
}
