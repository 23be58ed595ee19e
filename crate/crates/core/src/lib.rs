//! Knowledge-grounded dialogue strategy learning.
//!
//! Two agents converse in self-play, each grounding its turns in a persona
//! (a small set of background sentences). A frozen, supervised decoder turns
//! the selected background sentence into a response; the knowledge-selection
//! policy is the only thing reinforcement learning changes. Conversations are
//! rewarded for covering background knowledge without repeating it and for
//! staying coherent with the context.
//!
//! Module map:
//!
//! - [`corpus`]: tokenization, keywords, vocabulary, JSONL corpora and a
//!   synthetic corpus generator.
//! - [`nn`]: GRU / hierarchical GRU / additive attention / two-layer
//!   perceptron with hand-written gradients, a finite-difference checker,
//!   Adam and checkpoints.
//! - [`generation`]: the knowledge prior, knowledge selection, decoding and
//!   supervised pre-training.
//! - [`reward`]: informativeness (activation, coverage, repetition),
//!   the coherence scorer and the compound reward.
//! - [`selfplay`]: rollouts, Monte-Carlo baselines, the policy-gradient step,
//!   the training loop and greedy simulation.
//! - [`metrics`]: distinct-n, knowledge recall/precision/F1, Pearson.
//! - [`config`]: the run configuration shared by the command-line tool.

pub mod config;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod generation;
pub mod metrics;
pub mod nn;
pub mod reward;
pub mod rng;
pub mod selfplay;

pub use error::{Error, Result};

/// Index into a [`corpus::Vocab`].
pub type TokenId = u32;
