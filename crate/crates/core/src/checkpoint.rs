//! Versioned binary container for a trained model.
//!
//! Layout: the magic bytes `GLAQACKP`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header (model and training
//! configuration, vocabulary words, tensor names and shapes), then every tensor's
//! values as little-endian `f64` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams, PARAM_NAMES};
use crate::numerics::Tensor;
use crate::text::Vocabulary;
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 8] = b"GLAQACKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train: TrainConfig,
    pub vocab: Vocabulary,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    train: TrainConfig,
    vocabulary: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    pub fn new(model: Model, train: TrainConfig, vocab: Vocabulary) -> Result<Self> {
        if vocab.size() != model.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} ids but the model expects {}",
                vocab.size(),
                model.config.vocab_size
            )));
        }
        Ok(Self {
            model,
            train,
            vocab,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let named = self.model.params.named();
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.config.clone(),
            train: self.train.clone(),
            vocabulary: self.vocab.words().to_vec(),
            tensors: named
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header always serializes");
        let values: usize = named.iter().map(|(_, t)| t.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut reader = Reader { bytes, pos: 0 };
        if reader.take(8)? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic bytes)".into()));
        }
        let version = u32::from_le_bytes(reader.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint version {version} (this build reads version {FORMAT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(reader.take(8)?.try_into().expect("8 bytes"));
        let header_len =
            usize::try_from(header_len).map_err(|_| bad("header length overflows".into()))?;
        let header: Header = serde_json::from_slice(reader.take(header_len)?)
            .map_err(|e| bad(format!("header: {e}")))?;
        if header.format_version != version {
            return Err(bad("header and container versions disagree".into()));
        }
        header.model.validate()?;
        header.train.validate()?;
        let names: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
        if names != PARAM_NAMES {
            return Err(bad(format!("unexpected tensor list {names:?}")));
        }

        let mut params = ModelParams::zeros(&header.model)?;
        for (slot, entry) in params.tensors_mut().into_iter().zip(&header.tensors) {
            let count: usize = entry.shape.iter().product();
            let raw = reader.take(
                count
                    .checked_mul(8)
                    .ok_or_else(|| bad("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            *slot = Tensor::new(entry.shape.clone(), data)?;
        }
        if reader.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - reader.pos)));
        }
        params.check_shapes(&header.model)?;
        let model = Model {
            config: header.model,
            params,
        };
        Self::new(
            model,
            header.train,
            Vocabulary::from_words(header.vocabulary),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}
