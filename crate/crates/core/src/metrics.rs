//! Diversity, knowledge-usage and correlation metrics.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{KnowledgeSet, StopWords};
use crate::{Error, Result};

/// Distinct n-grams divided by the total number of words; 0 without words.
pub fn distinct_n<S: AsRef<[String]>>(utterances: &[S], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut seen: HashSet<&[String]> = HashSet::new();
    let mut words = 0usize;
    for u in utterances {
        let u = u.as_ref();
        words += u.len();
        for gram in u.windows(n) {
            seen.insert(gram);
        }
    }
    Ok(if words == 0 { 0.0 } else { seen.len() as f64 / words as f64 })
}

/// Tokens containing a letter or digit that are not stop words.
pub fn content_words<'a, I>(tokens: I, stopwords: &StopWords) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a String>,
{
    tokens
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric) && !stopwords.contains(t))
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rpf1 {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Rpf1 {
    pub fn from_sets(generated: &BTreeSet<String>, knowledge: &BTreeSet<String>) -> Self {
        let shared = generated.intersection(knowledge).count() as f64;
        let ratio = |den: usize| if den == 0 { 0.0 } else { shared / den as f64 };
        let recall = ratio(knowledge.len());
        let precision = ratio(generated.len());
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Rpf1 { recall, precision, f1 }
    }
}

pub fn knowledge_rpf1<S: AsRef<[String]>>(conversation: &[S], knowledge: &KnowledgeSet, stopwords: &StopWords) -> Rpf1 {
    let generated = content_words(conversation.iter().flat_map(|u| u.as_ref()), stopwords);
    let background = content_words(knowledge.entries.iter().flatten(), stopwords);
    Rpf1::from_sets(&generated, &background)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series of length {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument("pearson undefined for zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Area under the ROC curve via the Mann–Whitney statistic, ties counting half.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("roc_auc needs both classes"));
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::NonFinite("roc_auc scores".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid_rank = (i + j + 1) as f64 / 2.0;
        rank_sum += mid_rank * all[i..j].iter().filter(|(_, p)| *p).count() as f64;
        i = j;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub knowledge_recall: f64,
    pub knowledge_precision: f64,
    pub knowledge_f1: f64,
    pub n_conversations: usize,
}

/// Generated turns of one conversation (start utterance excluded).
#[derive(Clone, Copy, Debug)]
pub struct ConversationView<'a> {
    pub personas: [&'a KnowledgeSet; 2],
    pub turns: &'a [(usize, Vec<String>)],
}

/// Per-conversation values averaged over conversations. Knowledge R/P/F1 of
/// a conversation is the mean over speakers who spoke, each scored against
/// their own background.
pub fn evaluate(conversations: &[ConversationView], stopwords: &StopWords) -> Result<MetricsReport> {
    if conversations.is_empty() {
        return Err(Error::Empty("evaluate needs at least one conversation"));
    }
    let mut sum = MetricsReport::default();
    for conv in conversations {
        let utterances: Vec<&Vec<String>> = conv.turns.iter().map(|(_, u)| u).collect();
        sum.distinct_1 += distinct_n(&utterances, 1)?;
        sum.distinct_2 += distinct_n(&utterances, 2)?;
        let mut speakers = 0.0;
        let mut acc = Rpf1::default();
        for s in 0..2 {
            let own: Vec<&Vec<String>> = conv.turns.iter().filter(|(sp, _)| *sp == s).map(|(_, u)| u).collect();
            if own.is_empty() {
                continue;
            }
            let r = knowledge_rpf1(&own, conv.personas[s], stopwords);
            acc.recall += r.recall;
            acc.precision += r.precision;
            acc.f1 += r.f1;
            speakers += 1.0;
        }
        if speakers > 0.0 {
            sum.knowledge_recall += acc.recall / speakers;
            sum.knowledge_precision += acc.precision / speakers;
            sum.knowledge_f1 += acc.f1 / speakers;
        }
    }
    let n = conversations.len() as f64;
    Ok(MetricsReport {
        distinct_1: sum.distinct_1 / n,
        distinct_2: sum.distinct_2 / n,
        knowledge_recall: sum.knowledge_recall / n,
        knowledge_precision: sum.knowledge_precision / n,
        knowledge_f1: sum.knowledge_f1 / n,
        n_conversations: conversations.len(),
    })
}
