//! Template-based stand-in for a persona chat corpus.
//!
//! Each dialogue draws two disjoint personas from a knowledge pool. Every
//! turn verbalizes one of the speaker's own entries, walked in a shuffled
//! order without repeats until the persona is exhausted. Replies echo the
//! keyword of the partner's previous entry. From their second turn on,
//! speakers also acknowledge the echo of their own previous entry with that
//! entry's cue word, a related word that is not itself a persona keyword.

use rand::seq::{index, IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{tokenize, Corpus, Dialogue, KeywordRule, KnowledgeSet, Turn};
use crate::rng::{self, Stream};
use crate::{Error, Result};

const OPENERS: [&str; 3] = ["{z} .", "hi ! {z} .", "hello , {z} ."];
const RESPONSES: [&str; 4] = [
    "oh , {e} ! {z} .",
    "{e} ? nice . {z} .",
    "really , {e} ? well , {z} .",
    "cool , {e} . {z} .",
];
const FOLLOW_UPS: [&str; 4] = [
    "yes , {c} ! oh , {e} ! {z} .",
    "right , {c} . {e} ? nice . {z} .",
    "{c} , yes . really , {e} ? well , {z} .",
    "sure , {c} . cool , {e} . {z} .",
];

const POOL: [(&str, &str); 40] = [
    ("i like to ski", "snow"),
    ("i like to swim", "water"),
    ("i like to hike", "trail"),
    ("i like to cook", "kitchen"),
    ("i like to paint", "brush"),
    ("i like to dance", "music"),
    ("i like to read", "books"),
    ("i like to fish", "lake"),
    ("i have a dog", "walks"),
    ("i have a cat", "purring"),
    ("i have a parrot", "talking"),
    ("i have a hamster", "wheel"),
    ("i have a rabbit", "carrots"),
    ("i have a horse", "riding"),
    ("i live in paris", "france"),
    ("i live in tokyo", "japan"),
    ("i live in berlin", "germany"),
    ("i live in canada", "maple"),
    ("i live in texas", "ranch"),
    ("i live in london", "rain"),
    ("i play the guitar", "strings"),
    ("i play the piano", "keys"),
    ("i play the violin", "bow"),
    ("i play the drums", "beats"),
    ("i play the flute", "wind"),
    ("i love eating pizza", "cheese"),
    ("i love eating sushi", "rice"),
    ("i love eating pasta", "sauce"),
    ("i love eating tacos", "salsa"),
    ("i love eating curry", "spice"),
    ("i work as a nurse", "hospital"),
    ("i work as a teacher", "school"),
    ("i work as a chef", "restaurant"),
    ("i work as a pilot", "planes"),
    ("i work as a farmer", "crops"),
    ("my favorite color is blue", "sky"),
    ("my favorite color is green", "grass"),
    ("my favorite color is red", "roses"),
    ("my favorite color is purple", "grapes"),
    ("my favorite color is yellow", "sun"),
];

/// A persona sentence and its cue word.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub sentence: String,
    pub cue: String,
}

/// Forty persona sentences with one distinct keyword each under the shipped
/// stop-word list.
pub fn default_knowledge_pool() -> Vec<PoolEntry> {
    POOL.iter()
        .map(|&(sentence, cue)| PoolEntry {
            sentence: sentence.to_string(),
            cue: cue.to_string(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_dialogues: usize,
    pub persona_size: usize,
    pub turns_per_dialogue: usize,
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec, pool: &[PoolEntry], rule: &KeywordRule) -> Result<Corpus> {
    if spec.persona_size == 0 {
        return Err(Error::InvalidArgument("persona_size must be positive".into()));
    }
    if spec.persona_size > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "persona_size {} exceeds knowledge pool of {}",
            spec.persona_size,
            pool.len()
        )));
    }
    if 2 * spec.persona_size > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "two disjoint personas of {} need at least {} pool entries, have {}",
            spec.persona_size,
            2 * spec.persona_size,
            pool.len()
        )));
    }
    let entries: Vec<Vec<String>> = pool.iter().map(|p| tokenize(&p.sentence)).collect();
    for p in pool {
        let cue = tokenize(&p.cue);
        if cue.len() != 1 {
            return Err(Error::InvalidArgument(format!("cue `{}` must be a single token", p.cue)));
        }
        if entries.iter().any(|e| e.contains(&cue[0]) && rule.is_keyword(&cue[0])) {
            return Err(Error::InvalidArgument(format!("cue `{}` is a persona keyword", p.cue)));
        }
    }
    let echo_words = entries
        .iter()
        .map(|e| {
            e.iter()
                .rev()
                .find(|t| rule.is_keyword(t))
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("pool entry `{}` has no keyword", e.join(" "))))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = rng::stream(spec.seed, Stream::Corpus);
    let mut dialogues = Vec::with_capacity(spec.n_dialogues);
    for _ in 0..spec.n_dialogues {
        let drawn = index::sample(&mut rng, pool.len(), 2 * spec.persona_size).into_vec();
        let pool_ids = [&drawn[..spec.persona_size], &drawn[spec.persona_size..]];
        let personas = [
            KnowledgeSet::new(pool_ids[0].iter().map(|&i| entries[i].clone()).collect(), rule)?,
            KnowledgeSet::new(pool_ids[1].iter().map(|&i| entries[i].clone()).collect(), rule)?,
        ];
        let mut orders: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let mut own_last: [Option<usize>; 2] = [None, None];
        let mut turns: Vec<Turn> = Vec::with_capacity(spec.turns_per_dialogue);
        for t in 0..spec.turns_per_dialogue {
            let speaker = t % 2;
            if orders[speaker].is_empty() {
                let mut order: Vec<usize> = (0..spec.persona_size).collect();
                order.shuffle(&mut rng);
                order.reverse();
                orders[speaker] = order;
            }
            let k = orders[speaker].pop().expect("refilled above");
            let z = entries[pool_ids[speaker][k]].join(" ");
            let text = match turns.last() {
                None => OPENERS.choose(&mut rng).expect("non-empty").replace("{z}", &z),
                Some(prev) => {
                    let prev_k = prev.knowledge_index.expect("synthetic turns are grounded");
                    let echo = &echo_words[pool_ids[1 - speaker][prev_k]];
                    let text = match own_last[speaker] {
                        None => RESPONSES.choose(&mut rng).expect("non-empty").to_string(),
                        Some(j) => FOLLOW_UPS
                            .choose(&mut rng)
                            .expect("non-empty")
                            .replace("{c}", &pool[pool_ids[speaker][j]].cue),
                    };
                    text.replace("{z}", &z).replace("{e}", echo)
                }
            };
            own_last[speaker] = Some(k);
            turns.push(Turn {
                speaker,
                text: tokenize(&text),
                knowledge_index: Some(k),
            });
        }
        dialogues.push(Dialogue { personas, turns });
    }
    Corpus::new(dialogues)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64, n: usize) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            n_dialogues: n,
            persona_size: 5,
            turns_per_dialogue: 8,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let rule = KeywordRule::default();
        let pool = default_knowledge_pool();
        let a = generate_synthetic_corpus(&spec(1, 20), &pool, &rule).unwrap();
        let b = generate_synthetic_corpus(&spec(1, 20), &pool, &rule).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&spec(2, 20), &pool, &rule).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_dialogues_is_valid() {
        let c = generate_synthetic_corpus(&spec(1, 0), &default_knowledge_pool(), &KeywordRule::default()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn oversized_persona_rejected() {
        let mut s = spec(1, 1);
        s.persona_size = 41;
        assert!(generate_synthetic_corpus(&s, &default_knowledge_pool(), &KeywordRule::default()).is_err());
    }

    #[test]
    fn every_turn_overlaps_its_knowledge() {
        let rule = KeywordRule::default();
        let c = generate_synthetic_corpus(&spec(3, 50), &default_knowledge_pool(), &rule).unwrap();
        for d in &c.dialogues {
            let pool_a: Vec<_> = d.personas[0].entries.clone();
            assert!(d.personas[1].entries.iter().all(|e| !pool_a.contains(e)), "personas overlap");
            for t in &d.turns {
                let k = t.knowledge_index.unwrap();
                let overlap = rule.keywords(&t.text).intersection(&d.personas[t.speaker].keywords[k]).count();
                assert!(overlap >= 1);
            }
        }
    }

    #[test]
    fn turns_activate_only_their_own_entry() {
        let rule = KeywordRule::default();
        let c = generate_synthetic_corpus(&spec(4, 30), &default_knowledge_pool(), &rule).unwrap();
        for d in &c.dialogues {
            for t in &d.turns {
                let words = rule.keywords(&t.text);
                let hits: Vec<usize> = (0..d.personas[t.speaker].len())
                    .filter(|&i| words.intersection(&d.personas[t.speaker].keywords[i]).count() > 0)
                    .collect();
                assert_eq!(hits, vec![t.knowledge_index.unwrap()], "{:?}", t.text);
            }
        }
    }

    #[test]
    fn cue_that_is_a_keyword_rejected() {
        let mut pool = default_knowledge_pool();
        pool[0].cue = "swim".into();
        assert!(generate_synthetic_corpus(&spec(1, 2), &pool, &KeywordRule::default()).is_err());
        pool[0].cue = "two words".into();
        assert!(generate_synthetic_corpus(&spec(1, 2), &pool, &KeywordRule::default()).is_err());
    }

    #[test]
    fn pool_keywords_are_distinct() {
        let rule = KeywordRule::default();
        let mut seen = std::collections::BTreeSet::new();
        for p in default_knowledge_pool() {
            let s = p.sentence;
            let kw = rule.keywords(&tokenize(&s));
            assert_eq!(kw.len(), 1, "{s}: {kw:?}");
            assert!(seen.insert(kw.into_iter().next().unwrap()));
        }
    }
}
