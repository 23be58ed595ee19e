use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::{Error, Result, TokenId};

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Token/id bijection. Ids 0..4 are the reserved PAD, UNK, BOS, EOS markers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl TryFrom<VocabFile> for Vocab {
    type Error = Error;
    fn try_from(file: VocabFile) -> Result<Self> {
        if file.tokens.len() < RESERVED.len() || file.tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::InvalidArgument("vocab must start with the reserved tokens".into()));
        }
        let mut vocab = Vocab::reserved();
        for token in &file.tokens[RESERVED.len()..] {
            if vocab.index.contains_key(token) {
                return Err(Error::InvalidArgument(format!("duplicate vocab token `{token}`")));
            }
            vocab.push(token.clone());
        }
        Ok(vocab)
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile { tokens: v.tokens }
    }
}

impl Vocab {
    pub fn reserved() -> Self {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for token in RESERVED {
            vocab.push(token.to_string());
        }
        vocab
    }

    /// Reserved tokens followed by `tokens` in the given order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        Vocab::try_from(VocabFile { tokens: all })
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as TokenId);
        self.tokens.push(token);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or(RESERVED[UNK as usize], String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&id| self.token(id).to_string()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Every token with frequency ≥ `min_freq`, ordered by descending frequency
/// and then lexicographically, after the reserved ids.
pub fn build_vocab(dialogues: &[Dialogue], min_freq: usize) -> Result<Vocab> {
    if dialogues.is_empty() {
        return Err(Error::Empty("cannot build a vocabulary from an empty corpus"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for dialogue in dialogues {
        let persona_tokens = dialogue.personas.iter().flat_map(|p| p.entries.iter());
        let turn_tokens = dialogue.turns.iter().map(|t| &t.text);
        for sentence in persona_tokens.chain(turn_tokens) {
            for token in sentence {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq.max(1) && !RESERVED.contains(&t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = Vocab::reserved();
    for (token, _) in ranked {
        vocab.push(token.to_string());
    }
    Ok(vocab)
}
