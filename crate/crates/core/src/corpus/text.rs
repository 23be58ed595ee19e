use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use crate::{Error, Result};

const SHIPPED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Lowercases and splits on whitespace; every non-alphanumeric character
/// becomes a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

pub fn join_tokens(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// True for tokens carrying at least one letter or digit.
pub fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// Parses one token per line; blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The list bundled with the crate (`data/stopwords.txt`).
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_STOPWORDS)
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StopWords(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn extract_keywords(tokens: &[String], stopwords: &StopWords, min_len: usize) -> BTreeSet<String> {
    tokens
        .iter()
        .filter(|t| t.chars().count() >= min_len && !stopwords.contains(t))
        .cloned()
        .collect()
}

/// Stop words plus a minimum keyword length, used everywhere keywords are
/// matched.
#[derive(Clone, Debug)]
pub struct KeywordRule {
    pub stopwords: StopWords,
    pub min_len: usize,
}

impl KeywordRule {
    pub const DEFAULT_MIN_LEN: usize = 3;

    pub fn new(stopwords: StopWords, min_len: usize) -> Result<Self> {
        if min_len == 0 {
            return Err(Error::InvalidArgument("keyword min_len must be at least 1".into()));
        }
        Ok(KeywordRule { stopwords, min_len })
    }

    pub fn is_keyword(&self, token: &str) -> bool {
        token.chars().count() >= self.min_len && !self.stopwords.contains(token)
    }

    pub fn keywords(&self, tokens: &[String]) -> BTreeSet<String> {
        extract_keywords(tokens, &self.stopwords, self.min_len)
    }
}

impl Default for KeywordRule {
    fn default() -> Self {
        KeywordRule {
            stopwords: StopWords::shipped(),
            min_len: Self::DEFAULT_MIN_LEN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("I like to ski."), toks(&["i", "like", "to", "ski", "."]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Ski ski"), toks(&["ski", "ski"]));
        assert_eq!(tokenize("hi,you?"), toks(&["hi", ",", "you", "?"]));
    }

    #[test]
    fn keyword_examples() {
        let stop = StopWords::from_words(["i", "to"]);
        let kw = extract_keywords(&toks(&["i", "like", "to", "ski"]), &stop, 3);
        assert_eq!(kw, ["like", "ski"].iter().map(|s| s.to_string()).collect());
        assert!(extract_keywords(&toks(&["i", "to"]), &stop, 1).is_empty());
        assert_eq!(extract_keywords(&toks(&["ski", "ski"]), &stop, 3).len(), 1);
    }

    #[test]
    fn shipped_list_loads() {
        let stop = StopWords::shipped();
        assert!(stop.contains("i") && stop.contains("the") && !stop.contains("ski"));
    }

    #[test]
    fn zero_min_len_rejected() {
        assert!(KeywordRule::new(StopWords::shipped(), 0).is_err());
    }

    proptest! {
        #[test]
        fn tokenize_join_idempotent(s in "[a-zA-Z0-9 .,!?']{0,40}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&join_tokens(&once)), once);
        }

        #[test]
        fn keywords_avoid_stopwords(words in proptest::collection::vec("[a-e]{1,5}", 0..12)) {
            let stop = StopWords::from_words(["a", "ab", "abc", "bad", "cab"]);
            let kw = extract_keywords(&words, &stop, 2);
            prop_assert!(kw.iter().all(|k| !stop.contains(k) && k.len() >= 2));
        }
    }
}
