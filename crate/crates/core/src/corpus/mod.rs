//! Corpus ingestion, synthetic corpora, tokenization and keywords.

mod io;
mod synthetic;
mod text;
mod vocab;

use std::collections::BTreeSet;

pub use io::{load_corpus, parse_corpus, save_corpus, to_jsonl};
pub use synthetic::{default_knowledge_pool, generate_synthetic_corpus, PoolEntry, SyntheticSpec};
pub use text::{extract_keywords, is_word, join_tokens, tokenize, KeywordRule, StopWords};
pub use vocab::{build_vocab, Vocab, BOS, EOS, PAD, RESERVED, UNK};

use crate::{Error, Result};

/// One participant's background: sentences plus their keyword sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeSet {
    pub entries: Vec<Vec<String>>,
    pub keywords: Vec<BTreeSet<String>>,
}

impl KnowledgeSet {
    pub fn new(entries: Vec<Vec<String>>, rule: &KeywordRule) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("knowledge set needs at least one entry"));
        }
        let keywords = entries.iter().map(|e| rule.keywords(e)).collect();
        Ok(KnowledgeSet { entries, keywords })
    }

    pub fn from_sentences<S: AsRef<str>>(sentences: &[S], rule: &KeywordRule) -> Result<Self> {
        Self::new(sentences.iter().map(|s| tokenize(s.as_ref())).collect(), rule)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Turn {
    pub speaker: usize,
    pub text: Vec<String>,
    pub knowledge_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    pub personas: [KnowledgeSet; 2],
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Checks speaker alternation and knowledge-index bounds.
    pub fn validate(&self) -> Result<()> {
        for (t, turn) in self.turns.iter().enumerate() {
            if turn.speaker > 1 {
                return Err(Error::InvalidCorpus(format!("turn {t}: speaker {} is not 0 or 1", turn.speaker)));
            }
            if turn.text.is_empty() {
                return Err(Error::InvalidCorpus(format!("turn {t}: empty text")));
            }
            if t > 0 && self.turns[t - 1].speaker == turn.speaker {
                return Err(Error::InvalidCorpus(format!(
                    "turn {t}: speaker {} speaks twice in a row",
                    turn.speaker
                )));
            }
            if let Some(k) = turn.knowledge_index {
                let m = self.personas[turn.speaker].len();
                if k >= m {
                    return Err(Error::InvalidCorpus(format!(
                        "turn {t}: knowledge_index {k} out of range for speaker {} with {m} entries",
                        turn.speaker
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Supervised pre-training example `{u_{t-1}, z_i, u_t}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DialogueSample {
    pub knowledge: KnowledgeSet,
    pub last_utterance: Vec<String>,
    pub knowledge_index: Option<usize>,
    pub target: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub vocab: Vocab,
}

impl Corpus {
    /// Validates every dialogue and builds the vocabulary (min frequency 1).
    pub fn new(dialogues: Vec<Dialogue>) -> Result<Self> {
        for (d, dialogue) in dialogues.iter().enumerate() {
            dialogue
                .validate()
                .map_err(|e| Error::InvalidCorpus(format!("dialogue {d}: {e}")))?;
        }
        let vocab = if dialogues.is_empty() {
            Vocab::reserved()
        } else {
            build_vocab(&dialogues, 1)?
        };
        Ok(Corpus { dialogues, vocab })
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    /// Every turn after the first, paired with the partner's previous turn.
    pub fn samples(&self) -> Vec<DialogueSample> {
        let mut out = Vec::new();
        for dialogue in &self.dialogues {
            for pair in dialogue.turns.windows(2) {
                let (prev, turn) = (&pair[0], &pair[1]);
                out.push(DialogueSample {
                    knowledge: dialogue.personas[turn.speaker].clone(),
                    last_utterance: prev.text.clone(),
                    knowledge_index: turn.knowledge_index,
                    target: turn.text.clone(),
                });
            }
        }
        out
    }

    /// Splits off the last `fraction` of dialogues (at least one when the
    /// corpus has two or more).
    pub fn split(&self, fraction: f64) -> Result<(Corpus, Corpus)> {
        let n = self.dialogues.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("cannot split a corpus of {n} dialogue(s)")));
        }
        let held = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        let train = self.dialogues[..n - held].to_vec();
        let test = self.dialogues[n - held..].to_vec();
        Ok((
            Corpus {
                dialogues: train,
                vocab: self.vocab.clone(),
            },
            Corpus {
                dialogues: test,
                vocab: self.vocab.clone(),
            },
        ))
    }
}
