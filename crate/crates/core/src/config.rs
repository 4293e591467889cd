//! Flat key-value run configuration read from TOML, with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Head, ModelConfig};
use crate::text::{TfMode, DEFAULT_MAX_VOCAB};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset file; relative paths resolve against the config file's directory.
    pub data: PathBuf,
    /// Optional word-vector text file used to initialize embeddings.
    pub pretrained: Option<PathBuf>,
    pub min_count: usize,
    /// Vocabulary cap including the reserved ids.
    pub max_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub tf_dim: usize,
    pub proj_dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_len: usize,
    pub head: Head,
    pub tf_mode: TfMode,
    pub margin: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub keep_prob: f64,
    pub patience: usize,
    pub valid_pool_size: usize,
    /// Fraction of training questions held out for validation when the data has no valid split.
    pub holdout: f64,
    /// Evaluation pool size.
    pub k: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Self {
            data: PathBuf::from("data.jsonl"),
            pretrained: None,
            min_count: 1,
            max_vocab: DEFAULT_MAX_VOCAB,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            tf_dim: m.tf_dim,
            proj_dim: m.proj_dim,
            alpha: m.alpha,
            beta: m.beta,
            max_len: m.max_len,
            head: m.head,
            tf_mode: m.tf_mode,
            margin: t.margin,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            epochs: t.epochs,
            batch_size: t.batch_size,
            keep_prob: t.keep_prob,
            patience: t.patience,
            valid_pool_size: t.valid_pool_size,
            holdout: 0.1,
            k: 500,
            seed: t.seed,
        }
    }
}

impl RunConfig {
    /// Parses TOML text; errors name `path`, the line and the offending field.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start].matches('\n').count() + 1);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().trim_end().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data = base.join(&cfg.data);
        cfg.pretrained = cfg.pretrained.map(|p| base.join(p));
        Ok(cfg)
    }

    /// Applies one `key=value` override. Values use TOML syntax; bare words are strings.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut table = toml::Table::try_from(&*self).expect("config always serializes");
        if !table.contains_key(key) && !Self::optional_keys().contains(&key) {
            return Err(Error::Config(format!("unknown config field {key:?}")));
        }
        table.insert(key.to_string(), value);
        let updated: Self = table.try_into().map_err(|e: toml::de::Error| {
            Error::Config(format!("override {key}: {}", e.message().trim_end()))
        })?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    fn optional_keys() -> &'static [&'static str] {
        &["pretrained"]
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(3).validate()?;
        self.train_config().validate()?;
        if self.max_vocab < 3 {
            return Err(Error::Config(
                "max_vocab must leave room for at least one word".into(),
            ));
        }
        if self.min_count == 0 || self.k == 0 {
            return Err(Error::Config("min_count and k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::Config("holdout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            tf_dim: self.tf_dim,
            proj_dim: self.proj_dim,
            alpha: self.alpha,
            beta: self.beta,
            max_len: self.max_len,
            head: self.head,
            tf_mode: self.tf_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            margin: self.margin,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            epochs: self.epochs,
            batch_size: self.batch_size,
            keep_prob: self.keep_prob,
            patience: self.patience,
            valid_pool_size: self.valid_pool_size,
            seed: self.seed,
        }
    }

    /// Every field, defaults included, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}
