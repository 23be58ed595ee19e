//! Run configuration shared by every pipeline stage.
//!
//! A config is a JSON object; missing fields take their defaults and unknown
//! fields are rejected. Validation errors name the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{KeywordRule, StopWords, SyntheticSpec};
use crate::exec::Execution;
use crate::generation::PretrainConfig;
use crate::reward::CoherenceConfig;
use crate::selfplay::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Hidden size of every encoder, decoder and scorer.
    pub d: usize,
    /// Generated turns per self-play conversation.
    #[serde(rename = "T")]
    pub turns: usize,
    /// Trajectories per policy-gradient step.
    pub batch: usize,
    /// Rollouts per baseline estimate.
    #[serde(rename = "K")]
    pub baseline_samples: usize,
    pub lr_pretrain: f64,
    pub lr_rl: f64,
    /// Pre-training epochs.
    pub epochs: usize,
    pub overlap_threshold: usize,
    /// Policy-gradient iterations.
    pub iterations: usize,
    /// Fraction of dialogues held out from training.
    pub heldout: f64,
    pub corpus: CorpusSettings,
    pub pretrain: PretrainSettings,
    pub coherence: CoherenceSettings,
    pub simulation: SimulationSettings,
    pub execution: Execution,
    pub paths: Paths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub dialogues: usize,
    pub persona_size: usize,
    pub turns_per_dialogue: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSettings {
    pub batch: usize,
    pub aux_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceSettings {
    pub negative_ratio: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub conversations: usize,
    pub max_len: usize,
}

/// Relative paths resolve against the working directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input corpus; defaults to `corpus.jsonl` in the output directory.
    pub corpus: Option<PathBuf>,
    /// Stop-word list; the shipped list when absent.
    pub stopwords: Option<PathBuf>,
    pub checkpoints: PathBuf,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            d: 32,
            turns: 8,
            batch: 8,
            baseline_samples: 16,
            lr_pretrain: 1e-2,
            lr_rl: 2e-4,
            epochs: 40,
            overlap_threshold: 1,
            iterations: 100,
            heldout: 0.1,
            corpus: CorpusSettings::default(),
            pretrain: PretrainSettings::default(),
            coherence: CoherenceSettings::default(),
            simulation: SimulationSettings::default(),
            execution: Execution::default(),
            paths: Paths::default(),
        }
    }
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            dialogues: 500,
            persona_size: 5,
            turns_per_dialogue: 9,
        }
    }
}

impl Default for PretrainSettings {
    fn default() -> Self {
        PretrainSettings {
            batch: 16,
            aux_weight: 1.0,
        }
    }
}

impl Default for CoherenceSettings {
    fn default() -> Self {
        let c = CoherenceConfig::default();
        CoherenceSettings {
            negative_ratio: c.negative_ratio,
            epochs: c.epochs,
            lr: c.lr,
            batch: c.batch,
        }
    }
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            conversations: 100,
            max_len: 20,
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            stopwords: None,
            checkpoints: PathBuf::from("checkpoints"),
            output: PathBuf::from("out"),
        }
    }
}

fn positive(field: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config {
            field: field.to_string(),
            message: "must be positive".into(),
        })
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        positive("d", self.d > 0)?;
        positive("T", self.turns > 0)?;
        positive("batch", self.batch > 0)?;
        positive("K", self.baseline_samples > 0)?;
        positive("lr_pretrain", self.lr_pretrain > 0.0 && self.lr_pretrain.is_finite())?;
        positive("lr_rl", self.lr_rl > 0.0 && self.lr_rl.is_finite())?;
        positive("epochs", self.epochs > 0)?;
        positive("overlap_threshold", self.overlap_threshold > 0)?;
        positive("iterations", self.iterations > 0)?;
        positive("corpus.persona_size", self.corpus.persona_size > 0)?;
        positive("corpus.turns_per_dialogue", self.corpus.turns_per_dialogue > 1)?;
        positive("pretrain.batch", self.pretrain.batch > 0)?;
        positive("coherence.negative_ratio", self.coherence.negative_ratio > 0)?;
        positive("coherence.epochs", self.coherence.epochs > 0)?;
        positive("coherence.lr", self.coherence.lr > 0.0 && self.coherence.lr.is_finite())?;
        positive("coherence.batch", self.coherence.batch > 0)?;
        positive("simulation.max_len", self.simulation.max_len > 0)?;
        if !(self.pretrain.aux_weight >= 0.0 && self.pretrain.aux_weight.is_finite()) {
            return Err(Error::Config {
                field: "pretrain.aux_weight".into(),
                message: "must be non-negative".into(),
            });
        }
        if !(self.heldout > 0.0 && self.heldout < 1.0) {
            return Err(Error::Config {
                field: "heldout".into(),
                message: "must lie strictly between 0 and 1".into(),
            });
        }
        Ok(())
    }

    pub fn keyword_rule(&self) -> Result<KeywordRule> {
        let stopwords = match &self.paths.stopwords {
            Some(path) => StopWords::load(path)?,
            None => StopWords::shipped(),
        };
        KeywordRule::new(stopwords, KeywordRule::DEFAULT_MIN_LEN)
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seed,
            n_dialogues: self.corpus.dialogues,
            persona_size: self.corpus.persona_size,
            turns_per_dialogue: self.corpus.turns_per_dialogue,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.epochs,
            lr: self.lr_pretrain,
            batch: self.pretrain.batch,
            aux_weight: self.pretrain.aux_weight,
            seed: self.seed,
            execution: self.execution,
        }
    }

    pub fn coherence_config(&self) -> CoherenceConfig {
        CoherenceConfig {
            negative_ratio: self.coherence.negative_ratio,
            epochs: self.coherence.epochs,
            lr: self.coherence.lr,
            batch: self.coherence.batch,
            holdout: self.heldout,
            seed: self.seed,
            execution: self.execution,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch: self.batch,
            baseline_samples: self.baseline_samples,
            lr: self.lr_rl,
            turns: self.turns,
            seed: self.seed,
            execution: self.execution,
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.paths.corpus.clone().unwrap_or_else(|| self.paths.output.join("corpus.jsonl"))
    }

    pub fn pretrained_checkpoint(&self) -> PathBuf {
        self.paths.checkpoints.join("pretrained.json")
    }

    pub fn coherence_checkpoint(&self) -> PathBuf {
        self.paths.checkpoints.join("coherence.json")
    }

    pub fn policy_checkpoint(&self) -> PathBuf {
        self.paths.checkpoints.join("policy.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.turns, c.batch, c.baseline_samples), (8, 8, 16));
        assert_eq!(c.lr_rl, 2e-4);
        c.validate().unwrap();
    }

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.seed = 9;
        c.paths.corpus = Some("data/c.jsonl".into());
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match RunConfig::from_json(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(field(r#"{"K": 0}"#), "K");
        assert_eq!(field(r#"{"lr_rl": -1.0}"#), "lr_rl");
        assert_eq!(field(r#"{"coherence": {"lr": "fast"}}"#), "coherence.lr");
        assert_eq!(field(r#"{"heldout": 1.0}"#), "heldout");
        match RunConfig::from_json(r#"{"bogus": 1}"#) {
            Err(Error::Config { message, .. }) => assert!(message.contains("bogus"), "{message}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn derived_paths() {
        let c = RunConfig::default();
        assert_eq!(c.corpus_path(), PathBuf::from("out/corpus.jsonl"));
        assert_eq!(c.pretrained_checkpoint(), PathBuf::from("checkpoints/pretrained.json"));
    }
}
