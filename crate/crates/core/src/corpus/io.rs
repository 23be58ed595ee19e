use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{join_tokens, tokenize, Corpus, Dialogue, KeywordRule, KnowledgeSet, Turn};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueLine {
    personas: [Vec<String>; 2],
    turns: Vec<TurnLine>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnLine {
    speaker: usize,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knowledge_index: Option<usize>,
}

/// Parses a JSONL corpus (one dialogue per line; blank lines skipped).
pub fn parse_corpus(text: &str, rule: &KeywordRule) -> Result<Corpus> {
    let mut dialogues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DialogueLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let at_line = |e: Error| Error::Parse {
            line: line_no,
            message: e.to_string(),
        };
        let [a, b] = parsed.personas;
        let personas = [
            KnowledgeSet::from_sentences(&a, rule).map_err(at_line)?,
            KnowledgeSet::from_sentences(&b, rule).map_err(at_line)?,
        ];
        let turns = parsed
            .turns
            .into_iter()
            .map(|t| Turn {
                speaker: t.speaker,
                text: tokenize(&t.text),
                knowledge_index: t.knowledge_index,
            })
            .collect();
        let dialogue = Dialogue { personas, turns };
        dialogue.validate().map_err(at_line)?;
        dialogues.push(dialogue);
    }
    Corpus::new(dialogues)
}

pub fn load_corpus(path: impl AsRef<Path>, rule: &KeywordRule) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, rule)
}

pub fn to_jsonl(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for dialogue in &corpus.dialogues {
        let persona = |k: &KnowledgeSet| k.entries.iter().map(|e| join_tokens(e)).collect();
        let line = DialogueLine {
            personas: [persona(&dialogue.personas[0]), persona(&dialogue.personas[1])],
            turns: dialogue
                .turns
                .iter()
                .map(|t| TurnLine {
                    speaker: t.speaker,
                    text: join_tokens(&t.text),
                    knowledge_index: t.knowledge_index,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_jsonl(corpus)?).map_err(|e| Error::io(path, e))
}
