//! Knowledge selection, response decoding and supervised pre-training.

mod decode;
mod model;
mod prior;
mod pretrain;

pub use decode::DecodeMode;
pub use model::{Backbone, Decoder, GenerationModel, KnowledgeEncoding, ModelDims, ModelManifest, ParamGroup, Selector};
pub use prior::{mix_branches, select_knowledge, KnowledgePrior, PriorFeatures, SelectionMode};
pub use pretrain::{
    evaluate_nll, example_gradient, example_loss, pretrain, pretrain_examples, EpochLoss, ExampleLoss, PretrainConfig,
    PretrainExample,
};
