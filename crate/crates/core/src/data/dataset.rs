//! Line-delimited question/answer records.
//!
//! Each non-blank line is one JSON object:
//! `{"qid": "q1", "question": "...", "candidates": [{"text": "...", "label": 1}, ...]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::kg::AliasDictionary;
use crate::linking::{link, KnowledgeSequence, LinkerConfig};

pub const DEFAULT_MAX_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCandidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub qid: String,
    pub question: String,
    pub candidates: Vec<RawCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub label: u8,
    pub knowledge: KnowledgeSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QAInstance {
    pub qid: String,
    pub question: Vec<String>,
    pub question_knowledge: KnowledgeSequence,
    pub candidates: Vec<Candidate>,
}

impl QAInstance {
    pub fn labels(&self) -> Vec<u8> {
        self.candidates.iter().map(|c| c.label).collect()
    }

    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            qid: self.qid.clone(),
            question: self.question.join(" "),
            candidates: self
                .candidates
                .iter()
                .map(|c| RawCandidate {
                    text: c.tokens.join(" "),
                    label: Some(c.label as i64),
                })
                .collect(),
        }
    }
}

fn truncate(mut tokens: Vec<String>, max_len: usize) -> Vec<String> {
    tokens.truncate(max_len);
    tokens
}

/// Parses dataset text. With `require_labels` false, missing labels read as 0.
pub fn parse_dataset(text: &str, max_len: usize, require_labels: bool) -> Result<Vec<QAInstance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if raw.candidates.is_empty() {
            return Err(Error::EmptyCandidates(line_no));
        }
        let question = truncate(tokenize(&raw.question), max_len);
        if question.is_empty() {
            return Err(Error::MalformedRecord {
                line: line_no,
                reason: "question has no tokens".into(),
            });
        }
        let candidates = raw
            .candidates
            .into_iter()
            .map(|c| {
                let label = match c.label {
                    Some(l @ (0 | 1)) => l as u8,
                    Some(l) => {
                        return Err(Error::Label {
                            line: line_no,
                            label: l,
                        })
                    }
                    None if require_labels => {
                        return Err(Error::MalformedRecord {
                            line: line_no,
                            reason: "candidate has no label".into(),
                        })
                    }
                    None => 0,
                };
                let tokens = truncate(tokenize(&c.text), max_len);
                if tokens.is_empty() {
                    return Err(Error::MalformedRecord {
                        line: line_no,
                        reason: "candidate has no tokens".into(),
                    });
                }
                Ok(Candidate {
                    tokens,
                    label,
                    knowledge: KnowledgeSequence::default(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(QAInstance {
            qid: raw.qid,
            question_knowledge: KnowledgeSequence::default(),
            question,
            candidates,
        });
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, max_len: usize) -> Result<Vec<QAInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, max_len, true)
}

/// Loads a file whose candidates may omit labels.
pub fn load_unlabeled(path: &Path, max_len: usize) -> Result<Vec<QAInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, max_len, false)
}

pub fn to_jsonl(records: &[RawRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(path: &Path, instances: &[QAInstance]) -> Result<()> {
    let raw: Vec<RawRecord> = instances.iter().map(QAInstance::to_raw).collect();
    fs::write(path, to_jsonl(&raw)).map_err(|e| Error::io(path, e))
}

/// Attaches knowledge sequences to every question and candidate.
pub fn link_instances(
    instances: &mut [QAInstance],
    aliases: &AliasDictionary,
    config: &LinkerConfig,
) -> Result<()> {
    for inst in instances {
        inst.question_knowledge = link(&inst.question, aliases, config)?;
        for c in &mut inst.candidates {
            c.knowledge = link(&c.tokens, aliases, config)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECORD: &str = r#"{"qid":"q1","question":"Who founded it?","candidates":[{"text":"Alfred did.","label":1},{"text":"nobody","label":0},{"text":"maybe","label":0}]}"#;

    #[test]
    fn parses_a_record() {
        let data = parse_dataset(RECORD, 40, true).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].question, ["who", "founded", "it", "?"]);
        assert_eq!(data[0].labels(), vec![1, 0, 0]);
    }

    #[test]
    fn errors() {
        let empty = r#"{"qid":"q","question":"x","candidates":[]}"#;
        assert!(matches!(
            parse_dataset(empty, 40, true),
            Err(Error::EmptyCandidates(1))
        ));
        let label = r#"{"qid":"q","question":"x","candidates":[{"text":"y","label":2}]}"#;
        assert!(matches!(
            parse_dataset(label, 40, true),
            Err(Error::Label { line: 1, label: 2 })
        ));
        let text = format!("\n{RECORD}\nnot json\n");
        assert!(matches!(
            parse_dataset(&text, 40, true),
            Err(Error::MalformedRecord { line: 3, .. })
        ));
        let unlabeled = r#"{"qid":"q","question":"x","candidates":[{"text":"y"}]}"#;
        assert!(matches!(
            parse_dataset(unlabeled, 40, true),
            Err(Error::MalformedRecord { .. })
        ));
        assert_eq!(
            parse_dataset(unlabeled, 40, false).unwrap()[0].labels(),
            vec![0]
        );
    }

    #[test]
    fn truncates_long_sentences() {
        let long: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
        let rec = RawRecord {
            qid: "q".into(),
            question: "q".into(),
            candidates: vec![RawCandidate {
                text: long.join(" "),
                label: Some(1),
            }],
        };
        let data = parse_dataset(&to_jsonl(&[rec]), DEFAULT_MAX_LEN, true).unwrap();
        assert_eq!(data[0].candidates[0].tokens.len(), 40);
    }

    #[test]
    fn save_load_roundtrip() {
        let data = parse_dataset(RECORD, 40, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&path, &data).unwrap();
        assert_eq!(load_dataset(&path, 40).unwrap(), data);
    }
}
