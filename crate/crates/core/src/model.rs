//! Model configuration, learnable parameters and the scoring pipeline shared by
//! training, ranking and explanation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attention;
use crate::encoder;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::Rng;
use crate::text::{TfMode, TfVector, PAD};

/// Which representation head scores question/answer pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// TF-aware attention with norm-joined final representations.
    #[default]
    GlobalLocal,
    /// Additive attention on LSTM outputs and the pooled question, no TF features.
    LocalAttention,
    /// Feed-forward TF features concatenated with mean-pooled LSTM outputs, no attention.
    TfLstmConcat,
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-local" => Ok(Head::GlobalLocal),
            "local-attention" => Ok(Head::LocalAttention),
            "tf-lstm-concat" => Ok(Head::TfLstmConcat),
            other => Err(Error::Config(format!(
                "unknown head {other:?} (expected global-local, local-attention or tf-lstm-concat)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Hidden size of each LSTM direction; encoder outputs are twice this wide.
    pub hidden_dim: usize,
    /// Width of the tanh-projected TF vector.
    pub tf_dim: usize,
    /// Width of the local projection and of the attention comparison space.
    pub proj_dim: usize,
    /// Target norm of the TF part of a joint representation.
    pub alpha: f64,
    /// Target norm of the recurrent part of a joint representation.
    pub beta: f64,
    pub max_len: usize,
    pub head: Head,
    pub tf_mode: TfMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: crate::text::DEFAULT_MAX_VOCAB,
            embed_dim: 100,
            hidden_dim: 141,
            tf_dim: 50,
            proj_dim: 140,
            alpha: 0.5,
            beta: 1.0,
            max_len: 200,
            head: Head::GlobalLocal,
            tf_mode: TfMode::Binary,
        }
    }
}

impl ModelConfig {
    /// Toy dimensions used by gradient checks and small experiments.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 8,
            hidden_dim: 8,
            tf_dim: 4,
            proj_dim: 8,
            ..Self::default()
        }
    }

    /// Width of one encoder output row (both directions).
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("tf_dim", self.tf_dim),
            ("proj_dim", self.proj_dim),
            ("max_len", self.max_len),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size <= PAD {
            return Err(Error::Config(
                "vocab_size must exceed the reserved ids".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Config("alpha and beta must be positive".into()));
        }
        Ok(())
    }

    pub fn tf(&self, ids: &[usize]) -> TfVector {
        TfVector::new(self.vocab_size, ids, self.tf_mode)
    }
}

/// One LSTM direction. Gate blocks are laid out input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[embed_dim, 4 * hidden_dim]`
    pub w_input: Tensor,
    /// `[hidden_dim, 4 * hidden_dim]`
    pub w_hidden: Tensor,
    /// `[4 * hidden_dim]`
    pub bias: Tensor,
}

impl LstmParams {
    fn init(e: usize, h: usize, rng: &mut Rng) -> Self {
        let r = 1.0 / (h as f64).sqrt();
        let mut bias = Tensor::zeros(&[4 * h]);
        bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        Self {
            w_input: uniform(&[e, 4 * h], r, rng),
            w_hidden: uniform(&[h, 4 * h], r, rng),
            bias,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.shape()[0]
    }
}

/// Every learnable weight. Projections are stored `[in, out]` and applied as `x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `[v, e]`, PAD row held at zero.
    pub embedding: Tensor,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    /// TF projection `[v, tf_dim]`.
    pub w1: Tensor,
    /// Local projection `[H, proj_dim]`.
    pub w2: Tensor,
    /// Joint projection `[tf_dim + proj_dim, proj_dim]`.
    pub w3: Tensor,
    /// Question projection `[H, proj_dim]`.
    pub w4: Tensor,
    /// Baseline attention answer projection `[H, H]`.
    pub w_ad: Tensor,
    /// Baseline attention question projection `[H, H]`.
    pub w_qd: Tensor,
    /// Baseline attention scoring vector `[H]`.
    pub w_ms: Tensor,
    /// TF feed-forward layer of the concatenation head `[v, tf_dim]`.
    pub w_ff: Tensor,
}

pub const PARAM_NAMES: [&str; 15] = [
    "embedding",
    "lstm_fwd.w_input",
    "lstm_fwd.w_hidden",
    "lstm_fwd.bias",
    "lstm_bwd.w_input",
    "lstm_bwd.w_hidden",
    "lstm_bwd.bias",
    "w1",
    "w2",
    "w3",
    "w4",
    "w_ad",
    "w_qd",
    "w_ms",
    "w_ff",
];

fn uniform(shape: &[usize], r: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-r..=r));
    t
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    uniform(&[rows, cols], (6.0 / (rows + cols) as f64).sqrt(), rng)
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (v, e, h, hh) = (
            cfg.vocab_size,
            cfg.embed_dim,
            cfg.hidden_dim,
            cfg.output_dim(),
        );
        let mut embedding = uniform(&[v, e], 0.1, rng);
        embedding.row_mut(PAD).iter_mut().for_each(|x| *x = 0.0);
        Ok(Self {
            embedding,
            lstm_fwd: LstmParams::init(e, h, rng),
            lstm_bwd: LstmParams::init(e, h, rng),
            w1: glorot(v, cfg.tf_dim, rng),
            w2: glorot(hh, cfg.proj_dim, rng),
            w3: glorot(cfg.tf_dim + cfg.proj_dim, cfg.proj_dim, rng),
            w4: glorot(hh, cfg.proj_dim, rng),
            w_ad: glorot(hh, hh, rng),
            w_qd: glorot(hh, hh, rng),
            w_ms: uniform(&[hh], 1.0 / (hh as f64).sqrt(), rng),
            w_ff: glorot(v, cfg.tf_dim, rng),
        })
    }

    /// All-zero parameters with the shapes `cfg` requires.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut t: Vec<Tensor> = expected_shapes(cfg)
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect();
        let mut next = || t.remove(0);
        Ok(Self {
            embedding: next(),
            lstm_fwd: LstmParams {
                w_input: next(),
                w_hidden: next(),
                bias: next(),
            },
            lstm_bwd: LstmParams {
                w_input: next(),
                w_hidden: next(),
                bias: next(),
            },
            w1: next(),
            w2: next(),
            w3: next(),
            w4: next(),
            w_ad: next(),
            w_qd: next(),
            w_ms: next(),
            w_ff: next(),
        })
    }

    /// Parameters in checkpoint order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let t = [
            &self.embedding,
            &self.lstm_fwd.w_input,
            &self.lstm_fwd.w_hidden,
            &self.lstm_fwd.bias,
            &self.lstm_bwd.w_input,
            &self.lstm_bwd.w_hidden,
            &self.lstm_bwd.bias,
            &self.w1,
            &self.w2,
            &self.w3,
            &self.w4,
            &self.w_ad,
            &self.w_qd,
            &self.w_ms,
            &self.w_ff,
        ];
        PARAM_NAMES.iter().copied().zip(t).collect()
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 15] {
        [
            &mut self.embedding,
            &mut self.lstm_fwd.w_input,
            &mut self.lstm_fwd.w_hidden,
            &mut self.lstm_fwd.bias,
            &mut self.lstm_bwd.w_input,
            &mut self.lstm_bwd.w_hidden,
            &mut self.lstm_bwd.bias,
            &mut self.w1,
            &mut self.w2,
            &mut self.w3,
            &mut self.w4,
            &mut self.w_ad,
            &mut self.w_qd,
            &mut self.w_ms,
            &mut self.w_ff,
        ]
    }

    /// Checks every tensor shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = expected_shapes(cfg);
        for ((name, t), want) in self.named().into_iter().zip(expected) {
            if t.shape() != want.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Binds every parameter as a borrowed leaf.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>, requires_grad: bool) -> BoundParams {
        let mut leaf = |t: &'p Tensor| tape.leaf(t, requires_grad);
        BoundParams {
            embedding: leaf(&self.embedding),
            fwd: BoundLstm {
                w_input: leaf(&self.lstm_fwd.w_input),
                w_hidden: leaf(&self.lstm_fwd.w_hidden),
                bias: leaf(&self.lstm_fwd.bias),
            },
            bwd: BoundLstm {
                w_input: leaf(&self.lstm_bwd.w_input),
                w_hidden: leaf(&self.lstm_bwd.w_hidden),
                bias: leaf(&self.lstm_bwd.bias),
            },
            w1: leaf(&self.w1),
            w2: leaf(&self.w2),
            w3: leaf(&self.w3),
            w4: leaf(&self.w4),
            w_ad: leaf(&self.w_ad),
            w_qd: leaf(&self.w_qd),
            w_ms: leaf(&self.w_ms),
            w_ff: leaf(&self.w_ff),
        }
    }
}

pub(crate) fn expected_shapes(cfg: &ModelConfig) -> Vec<Vec<usize>> {
    let (v, e, h, hh, tf, p) = (
        cfg.vocab_size,
        cfg.embed_dim,
        cfg.hidden_dim,
        cfg.output_dim(),
        cfg.tf_dim,
        cfg.proj_dim,
    );
    let lstm = [vec![e, 4 * h], vec![h, 4 * h], vec![4 * h]];
    let mut shapes = vec![vec![v, e]];
    shapes.extend(lstm.iter().cloned());
    shapes.extend(lstm.iter().cloned());
    shapes.extend([
        vec![v, tf],
        vec![hh, p],
        vec![tf + p, p],
        vec![hh, p],
        vec![hh, hh],
        vec![hh, hh],
        vec![hh],
        vec![v, tf],
    ]);
    shapes
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLstm {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

/// Tape handles for [`ModelParams`].
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub embedding: Var,
    pub fwd: BoundLstm,
    pub bwd: BoundLstm,
    pub w1: Var,
    pub w2: Var,
    pub w3: Var,
    pub w4: Var,
    pub w_ad: Var,
    pub w_qd: Var,
    pub w_ms: Var,
    pub w_ff: Var,
}

impl BoundParams {
    /// Handles in the same order as [`ModelParams::named`].
    pub fn vars(&self) -> [Var; 15] {
        [
            self.embedding,
            self.fwd.w_input,
            self.fwd.w_hidden,
            self.fwd.bias,
            self.bwd.w_input,
            self.bwd.w_hidden,
            self.bwd.bias,
            self.w1,
            self.w2,
            self.w3,
            self.w4,
            self.w_ad,
            self.w_qd,
            self.w_ms,
            self.w_ff,
        ]
    }
}

/// A configured model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Encoder output for one text, reusable across pairings.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub ids: Vec<usize>,
    /// `[m, H]`
    pub outputs: Tensor,
    /// Mean over rows of `outputs`.
    pub pooled: Tensor,
    pub tf: TfVector,
}

/// Score of one question/answer pair plus the attention trace behind it.
#[derive(Debug, Clone)]
pub struct Scored {
    pub score: f64,
    pub attention: Option<attention::AttentionTrace>,
}

/// One side of a pair already placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct SideVars<'t> {
    pub outputs: Var,
    pub pooled: Var,
    pub tf: &'t TfVector,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let params = ModelParams::init(&config, rng)?;
        Ok(Self { config, params })
    }

    pub fn truncate<'a>(&self, ids: &'a [usize]) -> &'a [usize] {
        &ids[..ids.len().min(self.config.max_len)]
    }

    /// Encodes a token sequence without recording gradients.
    pub fn encode(&self, ids: &[usize]) -> Result<Encoded> {
        let ids = self.truncate(ids);
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let side = self.encode_on_tape(&mut tape, &bound, ids, None)?;
        Ok(Encoded {
            ids: ids.to_vec(),
            outputs: tape.value(side.0).clone(),
            pooled: tape.value(side.1).clone(),
            tf: self.config.tf(ids),
        })
    }

    /// Encoder outputs and their mean pool; `mask` (same shape as the outputs) applies dropout.
    pub fn encode_on_tape<'p>(
        &self,
        tape: &mut Tape<'p>,
        bound: &BoundParams,
        ids: &[usize],
        mask: Option<Tensor>,
    ) -> Result<(Var, Var)> {
        let emb = encoder::embed(tape, bound.embedding, ids)?;
        let mut outputs = encoder::bilstm(tape, &bound.fwd, &bound.bwd, emb)?;
        if let Some(mask) = mask {
            let m = tape.constant(mask);
            outputs = tape.mul(outputs, m)?;
        }
        let pooled = encoder::mean_pool(tape, outputs)?;
        Ok((outputs, pooled))
    }

    /// Score and attention trace for a pair of previously encoded texts.
    pub fn score_encoded(&self, question: &Encoded, answer: &Encoded) -> Result<Scored> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let q = SideVars {
            outputs: tape.leaf(&question.outputs, false),
            pooled: tape.leaf(&question.pooled, false),
            tf: &question.tf,
        };
        let a = SideVars {
            outputs: tape.leaf(&answer.outputs, false),
            pooled: tape.leaf(&answer.pooled, false),
            tf: &answer.tf,
        };
        let (score, weights) = self.pair_score(&mut tape, &bound, q, a)?;
        let attention = weights.map(|(raw, w)| attention::AttentionTrace {
            raw: tape.value(raw).data().to_vec(),
            weights: tape.value(w).data().to_vec(),
        });
        Ok(Scored {
            score: tape.value(score).data()[0],
            attention,
        })
    }

    pub fn score(&self, question: &[usize], answer: &[usize]) -> Result<Scored> {
        self.score_encoded(&self.encode(question)?, &self.encode(answer)?)
    }

    /// Similarity of the final question and answer representations under the configured head.
    /// Also returns the `(raw, weights)` attention handles for attention heads.
    pub fn pair_score(
        &self,
        tape: &mut Tape<'_>,
        bound: &BoundParams,
        q: SideVars<'_>,
        a: SideVars<'_>,
    ) -> Result<(Var, Option<(Var, Var)>)> {
        let cfg = &self.config;
        match cfg.head {
            Head::GlobalLocal => {
                let p = attention::GlobalLocalVars {
                    w1: bound.w1,
                    w2: bound.w2,
                    w3: bound.w3,
                    w4: bound.w4,
                    alpha: cfg.alpha,
                    beta: cfg.beta,
                };
                let trace = attention::global_local_attention(tape, a.outputs, a.tf, q.pooled, &p)?;
                let attended = attention::attended_answer(tape, a.outputs, trace.weights)?;
                let q_rep =
                    attention::final_question_rep(tape, q.tf, q.pooled, cfg.alpha, cfg.beta)?;
                let a_rep = attention::final_answer_rep(tape, a.tf, attended, cfg.alpha, cfg.beta)?;
                let s = attention::score(tape, q_rep, a_rep)?;
                Ok((s, Some((trace.raw, trace.weights))))
            }
            Head::LocalAttention => {
                let p = attention::LocalVars {
                    w_ad: bound.w_ad,
                    w_qd: bound.w_qd,
                    w_ms: bound.w_ms,
                };
                let trace = attention::local_attention(tape, a.outputs, q.pooled, &p)?;
                let attended = attention::attended_answer(tape, a.outputs, trace.weights)?;
                let s = attention::score(tape, q.pooled, attended)?;
                Ok((s, Some((trace.raw, trace.weights))))
            }
            Head::TfLstmConcat => {
                let q_rep = attention::tf_lstm_concat_rep(tape, q.tf, q.pooled, bound.w_ff)?;
                let a_rep = attention::tf_lstm_concat_rep(tape, a.tf, a.pooled, bound.w_ff)?;
                Ok((attention::score(tape, q_rep, a_rep)?, None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn init_respects_invariants() {
        let cfg = ModelConfig::toy(20);
        let p = ModelParams::init(&cfg, &mut substream(1, "init")).unwrap();
        p.check_shapes(&cfg).unwrap();
        assert!(p.embedding.row(PAD).iter().all(|&x| x == 0.0));
        let h = cfg.hidden_dim;
        assert!(p.lstm_fwd.bias.data()[h..2 * h].iter().all(|&b| b == 1.0));
        assert!(p.lstm_bwd.bias.data()[..h].iter().all(|&b| b == 0.0));
        let bound = 1.0 / (h as f64).sqrt();
        assert!(p.lstm_fwd.w_hidden.data().iter().all(|w| w.abs() <= bound));
        assert!(p.embedding.data().iter().all(|w| w.abs() <= 0.1));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ModelConfig {
            alpha: 0.0,
            ..ModelConfig::toy(20)
        };
        assert!(ModelParams::init(&cfg, &mut substream(1, "init")).is_err());
        assert!("bogus".parse::<Head>().is_err());
        assert_eq!(
            "tf-lstm-concat".parse::<Head>().unwrap(),
            Head::TfLstmConcat
        );
    }
}
