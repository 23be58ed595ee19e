//! Differentiable building blocks with hand-written backward passes.

mod activations;
mod adam;
pub mod checkpoint;
mod dense;
mod gradcheck;
mod gru;
pub mod params;

pub use activations::{log_sigmoid, log_softmax, sigmoid, softmax};
pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use dense::{AttentionTrace, Embedding, Linear, Mlp2, Mlp2Trace, MlpAttention};
pub use gradcheck::grad_check;
pub use gru::{Gru, GruGradients, GruStep, GruTrace, HierGru, HierTrace};
pub use params::Params;

/// Half-width of the uniform initialization range.
pub const INIT_SCALE: f64 = 0.08;
