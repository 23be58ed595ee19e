//! Conversation-level reward: rule-based informativeness plus a learned
//! per-turn coherence score.

mod coherence;
mod info;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use coherence::{
    coherence_examples, heldout_auc, train_coherence, CoherenceConfig, CoherenceExample, CoherenceReport,
    CoherenceScorer,
};
pub use info::{activation, informativeness, joint_activation, repetition, update_coverage, InfoState, InfoTracker};

use crate::corpus::{KeywordRule, KnowledgeSet, Vocab};
use crate::nn::{sigmoid, Checkpoint};
use crate::{Error, Result, TokenId};

/// `R = Σ_t r_C[t] + r_I`.
pub fn compound_reward(r_i: f64, r_c: &[f64]) -> f64 {
    r_c.iter().sum::<f64>() + r_i
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    #[serde(rename = "r_I")]
    pub r_i: f64,
    #[serde(rename = "r_C")]
    pub r_c: Vec<f64>,
    #[serde(rename = "R")]
    pub total: f64,
}

impl RewardReport {
    pub fn new(r_i: f64, r_c: Vec<f64>) -> Self {
        let total = compound_reward(r_i, &r_c);
        RewardReport { r_i, r_c, total }
    }

    pub fn coherence(&self) -> f64 {
        self.r_c.iter().sum()
    }

    pub fn is_consistent(&self) -> bool {
        compound_reward(self.r_i, &self.r_c) == self.total
    }
}

const SCORER_GROUP: &str = "coherence";

impl CoherenceScorer {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.insert(SCORER_GROUP, false, self);
        ckpt.metadata.insert("dim".into(), self.dim().into());
        ckpt.metadata.insert("vocab_size".into(), self.vocab_size().into());
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let read = |key: &str| {
            ckpt.metadata
                .get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))
        };
        let mut scorer = CoherenceScorer::new(
            read("vocab_size")?,
            read("dim")?,
            &mut crate::rng::stream(0, crate::rng::Stream::Init),
        );
        ckpt.restore(SCORER_GROUP, &mut scorer)?;
        Ok(scorer)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// The frozen evaluator used during self-play.
#[derive(Clone, Debug)]
pub struct RewardModel {
    pub scorer: CoherenceScorer,
    pub vocab: Vocab,
    pub rule: KeywordRule,
    pub overlap_threshold: usize,
}

impl RewardModel {
    /// Scores the generated `turns` (speaker, tokens) that follow `start`.
    /// Informativeness spans both backgrounds; coherence uses the history
    /// before each turn and the speaker's own background.
    pub fn evaluate(
        &self,
        personas: [&KnowledgeSet; 2],
        start: &[String],
        turns: &[(usize, Vec<String>)],
    ) -> Result<RewardReport> {
        if turns.is_empty() {
            return Err(Error::Empty("reward needs at least one turn"));
        }
        let sizes = [personas[0].len(), personas[1].len()];
        let mut tracker = InfoTracker::new(sizes[0] + sizes[1]);
        let encode = |tokens: &[String]| -> Vec<TokenId> { self.vocab.encode(tokens) };
        let mut backgrounds: [Option<ndarray::Array1<f64>>; 2] = [None, None];
        let mut context = self.scorer.context.document.initial_state();
        context = self
            .scorer
            .context_step(&context, &self.scorer.context_sentence(&encode(start))?);
        let mut r_c = Vec::with_capacity(turns.len());
        for (t, (speaker, tokens)) in turns.iter().enumerate() {
            let speaker = *speaker;
            if speaker > 1 {
                return Err(Error::InvalidArgument(format!("turn {t}: speaker {speaker}")));
            }
            let own = activation(tokens, personas[speaker], &self.rule, self.overlap_threshold);
            tracker.step(&joint_activation(speaker, &own, sizes)?)?;

            let ids = encode(tokens);
            if backgrounds[speaker].is_none() {
                let entries: Vec<Vec<TokenId>> = personas[speaker].entries.iter().map(|e| encode(e)).collect();
                backgrounds[speaker] = Some(self.scorer.encode_background(&entries)?);
            }
            let z = backgrounds[speaker].as_ref().expect("encoded above");
            let u = self
                .scorer
                .encode_utterance(&ids)
                .map_err(|e| Error::InvalidArgument(format!("turn {t}: {e}")))?;
            r_c.push(sigmoid(self.scorer.logit_encoded(&u, &context, z)?));
            context = self.scorer.context_step(&context, &self.scorer.context_sentence(&ids)?);
        }
        Ok(RewardReport::new(tracker.informativeness(), r_c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, StopWords};
    use crate::rng::{stream, Stream};

    #[test]
    fn compound_examples() {
        assert!((compound_reward(0.2, &[0.5, 0.5]) - 1.2).abs() < 1e-12);
        assert_eq!(compound_reward(0.0, &[0.0, 0.0]), 0.0);
        assert!(compound_reward(0.3, &[0.5, 0.6]) > compound_reward(0.3, &[0.5, 0.5]));
        assert!(compound_reward(0.4, &[0.5]) > compound_reward(0.3, &[0.5]));
        let r = RewardReport::new(0.2, vec![0.25, 0.5]);
        assert!(r.is_consistent());
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["r_I"], 0.2);
        assert_eq!(json["R"], r.total);
        assert_eq!(json["r_C"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn judge_matches_direct_scoring() {
        let rule = KeywordRule::new(StopWords::shipped(), 3).unwrap();
        let a = KnowledgeSet::from_sentences(&["i like to ski", "i have a dog"], &rule).unwrap();
        let b = KnowledgeSet::from_sentences(&["i live in paris", "i play the guitar"], &rule).unwrap();
        let start = tokenize("hi ! i have a dog .");
        let turns = vec![
            (1, tokenize("i live in paris . what about dog ?")),
            (0, tokenize("i like to ski . and paris ?")),
            (1, tokenize("i live in paris .")),
        ];
        let mut dialogue_tokens: Vec<Vec<String>> = vec![start.clone()];
        dialogue_tokens.extend(turns.iter().map(|(_, t)| t.clone()));
        dialogue_tokens.extend(a.entries.iter().cloned());
        dialogue_tokens.extend(b.entries.iter().cloned());
        let mut vocab_words: Vec<String> = dialogue_tokens.concat();
        vocab_words.sort();
        vocab_words.dedup();
        let vocab = Vocab::from_tokens(vocab_words).unwrap();
        let scorer = CoherenceScorer::new(vocab.len(), 4, &mut stream(3, Stream::Init));
        let judge = RewardModel {
            scorer: scorer.clone(),
            vocab: vocab.clone(),
            rule,
            overlap_threshold: 1,
        };
        let report = judge.evaluate([&a, &b], &start, &turns).unwrap();
        // b: paris, then ski (a), then paris again: coverage 2/4, one repeat of 4.
        assert!((report.r_i - (0.5 - 0.25)).abs() < 1e-12);
        assert!(report.is_consistent());
        let ex = CoherenceExample {
            utterance: vocab.encode(&turns[1].1),
            context: vec![vocab.encode(&start), vocab.encode(&turns[0].1)],
            background: a.entries.iter().map(|e| vocab.encode(e)).collect(),
        };
        assert!((report.r_c[1] - scorer.score(&ex).unwrap()).abs() < 1e-12);
        let back = CoherenceScorer::from_checkpoint(&scorer.to_checkpoint()).unwrap();
        assert_eq!(back, scorer);
    }
}
