//! Tokenization, vocabulary construction, id encoding and term-frequency vectors.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const PAD: usize = 1;
const RESERVED: [&str; 2] = ["<unk>", "<pad>"];

pub const DEFAULT_MAX_VOCAB: usize = 50_000;

/// Lowercases, splits on whitespace and strips leading/trailing punctuation.
/// Tokens that are nothing but punctuation disappear.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Bidirectional word/id mapping. Ids 0 and 1 are reserved for UNK and PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Counts tokens over the corpus and keeps those seen at least `min_count` times,
    /// most frequent first (ties lexicographic), truncated to `max_size` ids in total.
    pub fn build<S: AsRef<str>>(
        corpus: &[Vec<S>],
        min_count: usize,
        max_size: usize,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if min_count == 0 {
            return Err(Error::invalid(
                "build_vocabulary",
                "min_count must be at least 1",
            ));
        }
        if max_size < RESERVED.len() {
            return Err(Error::invalid(
                "build_vocabulary",
                "max_size must leave room for reserved ids",
            ));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for token in corpus.iter().flatten() {
            let token = token.as_ref();
            if RESERVED.contains(&token) {
                continue;
            }
            *counts.entry(token).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        // BTreeMap iteration is lexicographic, so a stable sort on count keeps ties ordered.
        ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
        ranked.truncate(max_size - RESERVED.len());
        Ok(Self::from_words(
            ranked.into_iter().map(|(w, _)| w.to_string()),
        ))
    }

    /// Builds from non-reserved words in id order (first word gets id 2).
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index = HashMap::new();
        for w in words {
            if RESERVED.contains(&w.as_str()) || index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), all.len());
            all.push(w);
        }
        Self { words: all, index }
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Non-reserved words in id order.
    pub fn words(&self) -> &[String] {
        &self.words[RESERVED.len()..]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.word(id).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    /// One word per line; the word on line `n` (1-based) has id `n + 1`.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for w in self.words() {
            writeln!(out, "{w}").expect("writing to a Vec cannot fail");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut words = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(parse_err(format!("invalid vocabulary entry {line:?}")));
            }
            if RESERVED.contains(&line.as_str()) {
                return Err(parse_err(format!(
                    "reserved word {line:?} must not be listed"
                )));
            }
            if let Some(prev) = seen.insert(line.clone(), i + 1) {
                return Err(parse_err(format!(
                    "duplicate word {line:?} (first on line {prev})"
                )));
            }
            words.push(line);
        }
        Ok(Self::from_words(words))
    }
}

/// How term-frequency entries are valued.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TfMode {
    /// 1 when the word occurs, 0 otherwise.
    #[default]
    Binary,
    /// Raw occurrence counts.
    Counts,
}

/// Sparse term-frequency vector over the vocabulary. UNK and PAD never appear as entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TfVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl TfVector {
    pub fn new(vocab_size: usize, seq: &[usize], mode: TfMode) -> Self {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for &id in seq {
            if id == UNK || id == PAD || id >= vocab_size {
                continue;
            }
            *counts.entry(id).or_default() += 1.0;
        }
        let entries = counts
            .into_iter()
            .map(|(id, c)| match mode {
                TfMode::Binary => (id, 1.0),
                TfMode::Counts => (id, c),
            })
            .collect();
        Self {
            dim: vocab_size,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(id, value)` pairs in ascending id order.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(id, v) in &self.entries {
            d[id] = v;
        }
        d
    }
}

pub fn tf_vector(vocab: &Vocabulary, seq: &[usize]) -> TfVector {
    TfVector::new(vocab.size(), seq, TfMode::Binary)
}
