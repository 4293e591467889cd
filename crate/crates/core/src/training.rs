//! Triplet sampling, hinge loss, Adam and the training loop with early stopping.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnswerStore, EncodedQuestion};
use crate::error::{Error, Result};
use crate::evaluation::{build_pools, mrr, precision_at_1, Ranker};
use crate::model::{BoundParams, Model, ModelConfig, ModelParams, SideVars};
use crate::numerics::{grad_check_five_point, GradCheck, Gradients, Tape, Tensor, Var};
use crate::par::Execution;
use crate::rng::{substream, Rng, DROPOUT, GRAD_POINT, INIT, POOLS, TRIPLETS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Probability of keeping an LSTM output coordinate; 1 disables dropout.
    pub keep_prob: f64,
    /// Validation checks without improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    /// Pool size used for validation ranking, capped at the answer store size.
    pub valid_pool_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 20,
            batch_size: 1,
            keep_prob: 0.7,
            patience: 5,
            valid_pool_size: 500,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let positive = |x: f64| x > 0.0;
        if !positive(self.margin) {
            return bad("margin must be positive");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep_prob must lie in (0, 1]");
        }
        if !positive(self.learning_rate)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return bad("learning_rate must be positive and beta1, beta2 must lie in [0, 1)");
        }
        if !positive(self.epsilon) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 || self.valid_pool_size == 0 {
            return bad("batch_size and valid_pool_size must be at least 1");
        }
        Ok(())
    }
}

/// `max(0, margin - sigma_star + sigma_d)`.
pub fn hinge_loss(sigma_star: f64, sigma_d: f64, margin: f64) -> f64 {
    (margin - sigma_star + sigma_d).max(0.0)
}

/// Tape form of [`hinge_loss`].
pub fn hinge_loss_var(
    tape: &mut Tape<'_>,
    sigma_star: Var,
    sigma_d: Var,
    margin: f64,
) -> Result<Var> {
    let diff = tape.sub(sigma_d, sigma_star)?;
    let shifted = tape.shift(diff, margin);
    Ok(tape.relu(shifted))
}

/// A question with one correct answer and one distractor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub question_id: u64,
    pub answer_id: u64,
    pub distractor_id: u64,
    pub question: Vec<usize>,
    pub answer: Vec<usize>,
    pub distractor: Vec<usize>,
}

/// Triplet for `question`: a uniformly chosen correct answer and a uniformly chosen other answer.
pub fn triplet_for(
    question: &EncodedQuestion,
    store: &AnswerStore,
    rng: &mut Rng,
) -> Result<Triplet> {
    if store.len() < 2 {
        return Err(Error::Data(
            "triplet sampling needs at least two answers".into(),
        ));
    }
    let correct: HashSet<u64> = question.answers.iter().copied().collect();
    let answer_id = *question
        .answers
        .choose(rng)
        .ok_or_else(|| Error::Data(format!("question {} has no correct answer", question.id)))?;
    let n_other = store
        .ids()
        .iter()
        .filter(|id| !correct.contains(id))
        .count();
    if n_other == 0 {
        return Err(Error::Data(format!(
            "every answer is correct for question {}; no distractor available",
            question.id
        )));
    }
    let pick = rng.gen_range(0..n_other);
    let distractor_id = store
        .ids()
        .iter()
        .copied()
        .filter(|id| !correct.contains(id))
        .nth(pick)
        .expect("index below the number of candidates");
    Ok(Triplet {
        question_id: question.id,
        answer_id,
        distractor_id,
        question: question.tokens.clone(),
        answer: store.tokens(answer_id)?.to_vec(),
        distractor: store.tokens(distractor_id)?.to_vec(),
    })
}

/// Uniform question, then [`triplet_for`].
pub fn sample_triplet(
    questions: &[&EncodedQuestion],
    store: &AnswerStore,
    rng: &mut Rng,
) -> Result<Triplet> {
    let q = questions
        .choose(rng)
        .ok_or_else(|| Error::Data("no training questions".into()))?;
    triplet_for(q, store, rng)
}

/// Adam moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub s: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        Self {
            s: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. `grads[i]` of `None` means a zero gradient.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Option<&[f64]>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, s) = (state.m[i].data_mut(), state.s[i].data_mut());
        if p.len() != m.len() || grads[i].is_some_and(|g| g.len() != m.len()) {
            return Err(Error::invalid(
                "adam_step",
                format!("shape mismatch for parameter {i}"),
            ));
        }
        let data = p.data_mut();
        for j in 0..data.len() {
            let g = grads[i].map_or(0.0, |g| g[j]);
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            s[j] = cfg.beta2 * s[j] + (1.0 - cfg.beta2) * g * g;
            let (m_hat, s_hat) = (m[j] / c1, s[j] / c2);
            data[j] -= cfg.learning_rate * m_hat / (s_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

fn dropout_mask(rows: usize, cols: usize, keep: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    t.data_mut().iter_mut().for_each(|x| {
        *x = if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    t
}

/// Records the hinge loss of one triplet. Dropout applies when `dropout` is given.
pub fn triplet_loss<'p>(
    model: &Model,
    tape: &mut Tape<'p>,
    bound: &BoundParams,
    triplet: &Triplet,
    margin: f64,
    mut dropout: Option<(f64, &mut Rng)>,
) -> Result<Var> {
    let cfg = &model.config;
    let mut side = |tape: &mut Tape<'p>, ids: &[usize]| -> Result<(Var, Var)> {
        let ids = model.truncate(ids);
        let mask = dropout
            .as_mut()
            .map(|(keep, rng)| dropout_mask(ids.len(), cfg.output_dim(), *keep, rng));
        model.encode_on_tape(tape, bound, ids, mask)
    };
    let q = side(tape, &triplet.question)?;
    let a = side(tape, &triplet.answer)?;
    let d = side(tape, &triplet.distractor)?;
    let (q_tf, a_tf, d_tf) = (
        cfg.tf(model.truncate(&triplet.question)),
        cfg.tf(model.truncate(&triplet.answer)),
        cfg.tf(model.truncate(&triplet.distractor)),
    );
    let qv = SideVars {
        outputs: q.0,
        pooled: q.1,
        tf: &q_tf,
    };
    let (s_star, _) = model.pair_score(
        tape,
        bound,
        qv,
        SideVars {
            outputs: a.0,
            pooled: a.1,
            tf: &a_tf,
        },
    )?;
    let (s_d, _) = model.pair_score(
        tape,
        bound,
        qv,
        SideVars {
            outputs: d.0,
            pooled: d.1,
            tf: &d_tf,
        },
    )?;
    hinge_loss_var(tape, s_star, s_d, margin)
}

/// Loss value and parameter gradients (checkpoint order) of one triplet.
pub fn triplet_gradients(
    model: &Model,
    triplet: &Triplet,
    margin: f64,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, true);
    let loss = triplet_loss(model, &mut tape, &bound, triplet, margin, dropout)?;
    let value = tape.value(loss).data()[0];
    let grads: Gradients = tape.backward(loss)?;
    Ok((
        value,
        bound
            .vars()
            .iter()
            .map(|&v| grads.slice(v).map(<[f64]>::to_vec))
            .collect(),
    ))
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_p_at_1: f64,
    pub valid_mrr: f64,
    pub seconds: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,valid_p_at_1,valid_mrr,seconds";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            r.epoch, r.train_loss, r.valid_p_at_1, r.valid_mrr, r.seconds
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation check (the latest one on ties).
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

fn add_into(acc: &mut [Option<Vec<f64>>], grads: Vec<Option<Vec<f64>>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        match (a.as_mut(), g) {
            (Some(a), Some(g)) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
            (None, Some(g)) => *a = Some(g),
            (_, None) => {}
        }
    }
}

/// Trains on `train` questions and selects parameters by P@1 on `valid` pools.
pub fn train(
    mut model: Model,
    train: &[&EncodedQuestion],
    valid: &[&EncodedQuestion],
    store: &AnswerStore,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.config.validate()?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            history: Vec::new(),
            best_epoch: None,
        });
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data(
            "training needs non-empty train and validation questions".into(),
        ));
    }
    let k = cfg.valid_pool_size.min(store.len());
    if k < cfg.valid_pool_size {
        log::info!("validation pool size capped at the answer store size {k}");
    }
    let valid_pools = build_pools(valid, store, k, &mut substream(cfg.seed, POOLS))?;
    let mut triplet_rng = substream(cfg.seed, TRIPLETS);
    let mut dropout_rng = substream(cfg.seed, DROPOUT);
    let mut adam = AdamState::new(model.params.named().into_iter().map(|(_, t)| t));
    let mut order: Vec<&EncodedQuestion> = train.to_vec();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut triplet_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Option<Vec<f64>>> = vec![None; adam.m.len()];
            for q in batch {
                let triplet = triplet_for(q, store, &mut triplet_rng)?;
                let dropout = (cfg.keep_prob < 1.0).then_some((cfg.keep_prob, &mut dropout_rng));
                let (loss, grads) = triplet_gradients(&model, &triplet, cfg.margin, dropout)?;
                if !loss.is_finite() {
                    log::error!("loss became {loss} at epoch {epoch}, step {step}");
                    return Err(Error::Diverged { epoch, step });
                }
                total += loss;
                add_into(&mut acc, grads);
            }
            step += 1;
            let scale = 1.0 / batch.len() as f64;
            let all_zero = acc.iter().flatten().all(|g| g.iter().all(|&x| x == 0.0));
            if all_zero {
                continue;
            }
            acc.iter_mut()
                .flatten()
                .for_each(|g| g.iter_mut().for_each(|x| *x *= scale));
            let grads: Vec<Option<&[f64]>> = acc.iter().map(|g| g.as_deref()).collect();
            adam_step(&mut model.params.tensors_mut(), &grads, &mut adam, cfg)?;
        }
        let train_loss = total / order.len() as f64;

        let ranker = Ranker::for_pools(&model, store, &valid_pools, Execution::Parallel)?;
        let results = ranker.rank_all(valid, &valid_pools)?;
        let (p1, m) = (precision_at_1(&results)?, mrr(&results)?);
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_p_at_1: p1,
            valid_mrr: m,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train_loss={train_loss:.6} valid_p_at_1={p1:.4} valid_mrr={m:.4} ({:.2}s)",
            record.seconds
        );
        history.push(record);

        let best_p = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
        if p1 > best_p {
            stale = 0;
        } else {
            stale += 1;
        }
        if p1 >= best_p {
            best = Some((p1, epoch, model.params.clone()));
        }
        if cfg.patience > 0 && stale >= cfg.patience {
            log::info!(
                "early stopping after epoch {epoch}: no validation improvement in {stale} checks"
            );
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    model.params = params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: Some(best_epoch),
    })
}

/// Finite-difference check of one parameter group.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub group: &'static str,
    pub parameters: usize,
    pub max_relative_error: f64,
}

/// Parameter groups and the tensors (checkpoint indices) they contain.
pub const PARAM_GROUPS: [(&str, &[usize]); 11] = [
    ("embedding", &[0]),
    ("lstm_fwd", &[1, 2, 3]),
    ("lstm_bwd", &[4, 5, 6]),
    ("w1", &[7]),
    ("w2", &[8]),
    ("w3", &[9]),
    ("w4", &[10]),
    ("w_ad", &[11]),
    ("w_qd", &[12]),
    ("w_ms", &[13]),
    ("w_ff", &[14]),
];

/// Margin large enough that the hinge is active for any pair of cosine scores.
pub const GRAD_CHECK_MARGIN: f64 = 2.5;

/// Step of the five-point stencil used for whole-model checks.
pub const GRAD_CHECK_STEP: f64 = 2e-3;

/// Compares backpropagated triplet-loss gradients with central differences for every
/// parameter group. Each group is checked under the head that uses it.
pub fn grad_check_model(model: &Model, triplet: &Triplet) -> Result<Vec<GroupCheck>> {
    use crate::model::Head;
    let mut out = Vec::new();
    for (group, members) in PARAM_GROUPS {
        let head = match group {
            "w_ad" | "w_qd" | "w_ms" => Head::LocalAttention,
            "w_ff" => Head::TfLstmConcat,
            _ => Head::GlobalLocal,
        };
        let mut m = model.clone();
        m.config.head = head;
        let (_, grads) = triplet_gradients(&m, triplet, GRAD_CHECK_MARGIN, None)?;
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for &i in members {
            let point = m.params.named()[i].1.data().to_vec();
            let analytic = grads[i].clone().unwrap_or_else(|| vec![0.0; point.len()]);
            let eval = |x: &[f64]| -> f64 {
                let mut probe = m.clone();
                probe.params.tensors_mut()[i].data_mut().copy_from_slice(x);
                let mut tape = Tape::new();
                let bound = probe.params.bind(&mut tape, false);
                match triplet_loss(&probe, &mut tape, &bound, triplet, GRAD_CHECK_MARGIN, None) {
                    Ok(l) => tape.value(l).data()[0],
                    Err(_) => f64::NAN,
                }
            };
            let check: GradCheck = grad_check_five_point(eval, &point, &analytic, GRAD_CHECK_STEP);
            worst = worst.max(check.max_relative_error);
            count += point.len();
        }
        out.push(GroupCheck {
            group,
            parameters: count,
            max_relative_error: worst,
        });
    }
    Ok(out)
}

/// Runs [`grad_check_model`] at a seeded point: every parameter drawn from U(-1, 1)
/// and a triplet of random token sequences.
pub fn grad_check_random(config: &ModelConfig, seed: u64) -> Result<Vec<GroupCheck>> {
    let mut model = Model::new(config.clone(), &mut substream(seed, INIT))?;
    let mut rng = substream(seed, GRAD_POINT);
    for t in model.params.tensors_mut() {
        t.data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.gen_range(-1.0..1.0));
    }
    let v = config.vocab_size;
    let mut seq = |n: usize| -> Vec<usize> {
        (0..n)
            .map(|_| loop {
                let id = rng.gen_range(0..v);
                if id != crate::text::PAD {
                    break id;
                }
            })
            .collect()
    };
    let triplet = Triplet {
        question_id: 0,
        answer_id: 1,
        distractor_id: 2,
        question: seq(4),
        answer: seq(6),
        distractor: seq(5),
    };
    grad_check_model(&model, &triplet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;
    use crate::model::ModelConfig;
    use proptest::prelude::*;

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(0.9, 0.1, 0.2), 0.0);
        assert!((hinge_loss(0.3, 0.25, 0.2) - 0.15).abs() < 1e-15);
        assert_eq!(hinge_loss(0.4, 0.4, 0.2), 0.2);
    }

    #[test]
    fn hinge_kink_has_zero_subgradient() {
        let mut tape = Tape::new();
        let s = tape.variable(Tensor::scalar(0.5));
        let d = tape.variable(Tensor::scalar(0.3));
        let l = hinge_loss_var(&mut tape, s, d, 0.2).unwrap();
        assert!(tape.value(l).data()[0].abs() < 1e-15);
        let g = tape.backward(l).unwrap();
        let gs = g.slice(s).map_or(0.0, |x| x[0]);
        assert_eq!(gs, 0.0);
    }

    fn scalar_cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn adam_first_step_examples() {
        let cfg = scalar_cfg();
        let mut theta = Tensor::scalar(0.5);
        let mut state = AdamState::new([&theta]);
        adam_step(&mut [&mut theta], &[Some(&[1.0][..])], &mut state, &cfg).unwrap();
        assert!((theta.data()[0] - (0.5 - 0.001)).abs() < 1e-10);
        assert_eq!(state.t, 1);

        let mut v = Tensor::vector(vec![1.0, 1.0, 1.0]);
        let mut state = AdamState::new([&v]);
        adam_step(
            &mut [&mut v],
            &[Some(&[3.0, -0.01, 0.0][..])],
            &mut state,
            &cfg,
        )
        .unwrap();
        assert!(v.data()[0] < 1.0 && v.data()[1] > 1.0 && v.data()[2] == 1.0);

        let mut w = Tensor::vector(vec![0.3, -0.2]);
        let before = w.clone();
        let mut state = AdamState::new([&w]);
        adam_step(&mut [&mut w], &[None], &mut state, &cfg).unwrap();
        assert_eq!(w, before);
    }

    fn store(n: u64) -> AnswerStore {
        AnswerStore::new((0..n).map(|i| (i, vec![2 + i as usize, 3]))).unwrap()
    }

    fn q(id: u64, answers: Vec<u64>) -> EncodedQuestion {
        EncodedQuestion {
            id,
            tokens: vec![2, 3],
            answers,
            split: Split::Train,
        }
    }

    #[test]
    fn two_answers_force_the_distractor() {
        let s = store(2);
        let qs = [q(0, vec![0]), q(1, vec![1])];
        let refs: Vec<&EncodedQuestion> = qs.iter().collect();
        let mut rng = substream(1, TRIPLETS);
        for _ in 0..50 {
            let t = sample_triplet(&refs, &s, &mut rng).unwrap();
            assert_eq!(t.distractor_id, 1 - t.answer_id);
            assert_ne!(t.distractor_id, t.answer_id);
        }
        assert!(sample_triplet(&refs, &store(1), &mut rng).is_err());
        assert!(sample_triplet(&[], &s, &mut rng).is_err());
    }

    #[test]
    fn triplet_stream_is_seed_deterministic() {
        let s = store(6);
        let qs: Vec<EncodedQuestion> = (0..6).map(|i| q(i, vec![i])).collect();
        let refs: Vec<&EncodedQuestion> = qs.iter().collect();
        let draw = |seed| {
            let mut rng = substream(seed, TRIPLETS);
            (0..40)
                .map(|_| sample_triplet(&refs, &s, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn distractors_are_uniform() {
        let s = store(10);
        let question = q(0, vec![0]);
        let mut rng = substream(5, TRIPLETS);
        let mut counts = [0usize; 10];
        let n = 10_000;
        for _ in 0..n {
            counts[triplet_for(&question, &s, &mut rng).unwrap().distractor_id as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        let p = 1.0 / 9.0;
        let (mean, sd) = (n as f64 * p, (n as f64 * p * (1.0 - p)).sqrt());
        for &c in &counts[1..] {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    fn toy() -> (Model, Triplet) {
        let model = Model::new(ModelConfig::toy(20), &mut substream(3, "init")).unwrap();
        let t = Triplet {
            question_id: 0,
            answer_id: 1,
            distractor_id: 2,
            question: vec![2, 5, 9],
            answer: vec![5, 7, 11, 3, 0],
            distractor: vec![4, 13, 17, 19],
        };
        (model, t)
    }

    #[test]
    fn satisfied_margin_gives_zero_gradients() {
        let (model, t) = toy();
        let (loss, grads) = triplet_gradients(&model, &t, 1e-9, None).unwrap();
        if loss == 0.0 {
            assert!(grads.iter().flatten().all(|g| g.iter().all(|&x| x == 0.0)));
        }
        let swapped = Triplet {
            answer: t.distractor.clone(),
            distractor: t.answer.clone(),
            ..t.clone()
        };
        let (l2, g2) = triplet_gradients(&model, &swapped, 1e-9, None).unwrap();
        let (zero_loss, zero_grads) = if loss == 0.0 { (loss, grads) } else { (l2, g2) };
        assert_eq!(zero_loss, 0.0);
        assert!(zero_grads
            .iter()
            .flatten()
            .all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn every_parameter_group_matches_finite_differences() {
        let checks = grad_check_random(&ModelConfig::toy(20), 7).unwrap();
        assert_eq!(checks.len(), 11);
        for c in &checks {
            assert!(
                c.max_relative_error < 1e-4,
                "{}: {}",
                c.group,
                c.max_relative_error
            );
        }
    }

    proptest! {
        #[test]
        fn hinge_is_nonnegative_and_lipschitz(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0, m in 0.01f64..1.0,
        ) {
            let (l1, l2) = (hinge_loss(a, b, m), hinge_loss(c, d, m));
            prop_assert!(l1 >= 0.0);
            prop_assert!((l1 - l2).abs() <= (a - c).abs() + (b - d).abs() + 1e-12);
            if a > b + m + 1e-12 {
                prop_assert_eq!(l1, 0.0);
            }
            if a < b + m - 1e-12 {
                prop_assert!(l1 > 0.0);
            }
        }
    }
}
