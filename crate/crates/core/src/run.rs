//! End-to-end workflows over dataset files: training from a run configuration and
//! evaluating a checkpoint on one split.

use rand::seq::SliceRandom;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{Dataset, Encoded, EncodedQuestion, Split};
use crate::encoder::load_pretrained;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, MetricsReport};
use crate::model::Model;
use crate::par::Execution;
use crate::rng::{substream, HOLDOUT, INIT, POOLS};
use crate::training::{train, EpochRecord};

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Training and validation questions. Without a valid split, a seeded `holdout`
/// fraction of the training questions validates; with `holdout = 0` the training
/// questions validate themselves.
pub fn train_valid_split(
    encoded: &Encoded,
    holdout: f64,
    seed: u64,
) -> Result<(Vec<&EncodedQuestion>, Vec<&EncodedQuestion>)> {
    let mut train_qs = encoded.split(Split::Train);
    if train_qs.is_empty() {
        return Err(Error::Data("dataset has no training questions".into()));
    }
    let valid = encoded.split(Split::Valid);
    if !valid.is_empty() {
        return Ok((train_qs, valid));
    }
    if holdout == 0.0 {
        log::info!("no valid split and holdout = 0: validating on the training questions");
        return Ok((train_qs.clone(), train_qs));
    }
    let n_hold = ((train_qs.len() as f64 * holdout).round() as usize).max(1);
    if n_hold >= train_qs.len() {
        return Err(Error::Data(format!(
            "holding out {n_hold} of {} training questions leaves none to train on",
            train_qs.len()
        )));
    }
    train_qs.shuffle(&mut substream(seed, HOLDOUT));
    let valid = train_qs.split_off(train_qs.len() - n_hold);
    log::info!("no valid split: holding out {n_hold} training questions for validation");
    Ok((train_qs, valid))
}

pub fn train_from_config(cfg: &RunConfig, data: &Dataset) -> Result<TrainRun> {
    cfg.validate()?;
    data.validate()?;
    let vocab = data.build_vocabulary(cfg.min_count, cfg.max_vocab)?;
    log::info!("vocabulary: {} ids", vocab.size());
    let encoded = Encoded::new(data, &vocab)?;
    let (train_qs, valid_qs) = train_valid_split(&encoded, cfg.holdout, cfg.seed)?;
    let mut model = Model::new(
        cfg.model_config(vocab.size()),
        &mut substream(cfg.seed, INIT),
    )?;
    if let Some(path) = &cfg.pretrained {
        let n = load_pretrained(path, &vocab, &mut model.params.embedding)?;
        log::info!("initialized {n} embeddings from {}", path.display());
    }
    let train_cfg = cfg.train_config();
    let outcome = train(model, &train_qs, &valid_qs, &encoded.answers, &train_cfg)?;
    Ok(TrainRun {
        checkpoint: Checkpoint::new(outcome.model, train_cfg, vocab)?,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
    })
}

/// Ranks every question of `split` in a seeded pool of size `k`.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    data: &Dataset,
    split: Split,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<MetricsReport> {
    let encoded = Encoded::new(data, &ck.vocab)?;
    let questions = encoded.split(split);
    if questions.is_empty() {
        return Err(Error::Data(format!("dataset has no {split} questions")));
    }
    let results = evaluate(
        &ck.model,
        &questions,
        &encoded.answers,
        k,
        &mut substream(seed, POOLS),
        exec,
    )?;
    MetricsReport::new(split.to_string(), k, &results)
}
