//! Line-delimited JSON datasets of answers and questions, and their id-encoded form.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, valid or test)"
            ))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub id: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: u64,
    pub text: String,
    pub answers: Vec<u64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Answer(AnswerRecord),
    Question(QuestionRecord),
}

/// Answers and questions; each question lists the ids of its correct answers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub answers: Vec<AnswerRecord>,
    pub questions: Vec<QuestionRecord>,
}

impl Dataset {
    /// Checks id uniqueness and that every referenced answer exists.
    pub fn validate(&self) -> Result<()> {
        self.check(|i, msg| Error::Data(format!("record {}: {msg}", i + 1)))
    }

    fn check(&self, err: impl Fn(usize, String) -> Error) -> Result<()> {
        let mut answer_ids = HashSet::new();
        for (i, a) in self.answers.iter().enumerate() {
            if !answer_ids.insert(a.id) {
                return Err(err(i, format!("duplicate answer id {}", a.id)));
            }
        }
        let mut question_ids = HashSet::new();
        let offset = self.answers.len();
        for (i, q) in self.questions.iter().enumerate() {
            if !question_ids.insert(q.id) {
                return Err(err(offset + i, format!("duplicate question id {}", q.id)));
            }
            if q.answers.is_empty() {
                return Err(err(
                    offset + i,
                    format!("question {} lists no answers", q.id),
                ));
            }
            if let Some(missing) = q.answers.iter().find(|a| !answer_ids.contains(a)) {
                return Err(err(
                    offset + i,
                    format!("question {} references unknown answer {missing}", q.id),
                ));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut data = Dataset::default();
        let mut answer_lines = Vec::new();
        let mut question_lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(line) {
                Ok(Record::Answer(a)) => {
                    answer_lines.push(i + 1);
                    data.answers.push(a);
                }
                Ok(Record::Question(q)) => {
                    question_lines.push(i + 1);
                    data.questions.push(q);
                }
                Err(e) => return Err(parse_err(i + 1, e.to_string())),
            }
        }
        data.check(|i, msg| {
            let line = answer_lines
                .get(i)
                .copied()
                .unwrap_or_else(|| question_lines[i - answer_lines.len()]);
            parse_err(line, msg)
        })?;
        Ok(data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line.map_err(|e| Error::io(path, e))?);
            text.push('\n');
        }
        Self::parse(&text, path)
    }

    /// Answers first, then questions, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let records = self
            .answers
            .iter()
            .cloned()
            .map(Record::Answer)
            .chain(self.questions.iter().cloned().map(Record::Question));
        for r in records {
            let line = serde_json::to_string(&r).expect("records always serialize");
            writeln!(out, "{line}").expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn questions_in(&self, split: Split) -> impl Iterator<Item = &QuestionRecord> {
        self.questions.iter().filter(move |q| q.split == split)
    }

    /// Vocabulary over all answers and the training questions.
    pub fn build_vocabulary(&self, min_count: usize, max_size: usize) -> Result<Vocabulary> {
        let corpus: Vec<Vec<String>> = self
            .answers
            .iter()
            .map(|a| tokenize(&a.text))
            .chain(self.questions_in(Split::Train).map(|q| tokenize(&q.text)))
            .collect();
        Vocabulary::build(&corpus, min_count, max_size)
    }
}

/// Token-id form of the answers, addressable by answer id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerStore {
    ids: Vec<u64>,
    tokens: Vec<Vec<usize>>,
    index: HashMap<u64, usize>,
}

impl AnswerStore {
    pub fn new(entries: impl IntoIterator<Item = (u64, Vec<usize>)>) -> Result<Self> {
        let mut store = Self {
            ids: Vec::new(),
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (id, toks) in entries {
            if store.index.insert(id, store.ids.len()).is_some() {
                return Err(Error::Data(format!("duplicate answer id {id}")));
            }
            store.ids.push(id);
            store.tokens.push(toks);
        }
        Ok(store)
    }

    pub fn encode(answers: &[AnswerRecord], vocab: &Vocabulary) -> Result<Self> {
        Self::new(
            answers
                .iter()
                .map(|a| (a.id, vocab.encode(&tokenize(&a.text)))),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn tokens(&self, id: u64) -> Result<&[usize]> {
        self.position(id)
            .map(|i| self.tokens[i].as_slice())
            .ok_or_else(|| Error::Data(format!("answer {id} is not in the answer store")))
    }
}

/// A question in token-id form with its correct answer ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedQuestion {
    pub id: u64,
    pub tokens: Vec<usize>,
    pub answers: Vec<u64>,
    pub split: Split,
}

/// A dataset encoded against a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub answers: AnswerStore,
    pub questions: Vec<EncodedQuestion>,
}

impl Encoded {
    pub fn new(data: &Dataset, vocab: &Vocabulary) -> Result<Self> {
        data.validate()?;
        let questions = data
            .questions
            .iter()
            .map(|q| EncodedQuestion {
                id: q.id,
                tokens: vocab.encode(&tokenize(&q.text)),
                answers: q.answers.clone(),
                split: q.split,
            })
            .collect();
        Ok(Self {
            answers: AnswerStore::encode(&data.answers, vocab)?,
            questions,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&EncodedQuestion> {
        self.questions.iter().filter(|q| q.split == split).collect()
    }

    pub fn question(&self, id: u64) -> Option<&EncodedQuestion> {
        self.questions.iter().find(|q| q.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"kind":"answer","id":1,"text":"Freeze it online."}
{"kind":"answer","id":2,"text":"Call us."}
{"kind":"question","id":10,"text":"How do I freeze my account?","answers":[1],"split":"train"}
{"kind":"question","id":11,"text":"Phone?","answers":[2,1],"split":"test"}
"#;

    #[test]
    fn parse_roundtrip() {
        let d = Dataset::parse(SAMPLE, Path::new("x.jsonl")).unwrap();
        assert_eq!(d.answers.len(), 2);
        assert_eq!(d.questions[1].answers, vec![2, 1]);
        assert_eq!(d.questions_in(Split::Test).count(), 1);
        assert_eq!(d.to_jsonl(), SAMPLE);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = SAMPLE.replace("\"answers\":[1]", "\"answers\":[7]");
        let err = Dataset::parse(&bad, Path::new("d.jsonl"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("d.jsonl:3:"), "{err}");
        assert!(err.contains("unknown answer 7"));
        let bad = SAMPLE.replace("\"id\":2,", "\"id\":1,");
        let err = Dataset::parse(&bad, Path::new("d.jsonl"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("d.jsonl:2:"), "{err}");
        let bad = SAMPLE.replace("\"split\":\"test\"", "\"split\":\"dev\"");
        let err = Dataset::parse(&bad, Path::new("d.jsonl"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("d.jsonl:4:"), "{err}");
        let bad = SAMPLE.replace("\"text\":\"Call us.\"", "\"txt\":\"Call us.\"");
        assert!(Dataset::parse(&bad, Path::new("d.jsonl")).is_err());
    }

    #[test]
    fn encoding_uses_training_vocabulary() {
        let d = Dataset::parse(SAMPLE, Path::new("x.jsonl")).unwrap();
        let vocab = d.build_vocabulary(1, 100).unwrap();
        assert_eq!(vocab.id("phone"), crate::text::UNK);
        let enc = Encoded::new(&d, &vocab).unwrap();
        assert_eq!(enc.answers.len(), 2);
        assert_eq!(
            enc.answers.tokens(2).unwrap(),
            vocab.encode(&["call", "us"]).as_slice()
        );
        assert!(enc.answers.tokens(3).is_err());
        assert_eq!(enc.split(Split::Train)[0].tokens.len(), 6);
    }
}
