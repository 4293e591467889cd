//! Attention heads and final representations.
//!
//! All functions record onto a [`Tape`], so the same code serves inference,
//! training and explanation.

use crate::error::Result;
use crate::numerics::{Tape, Tensor, Var};
use crate::text::TfVector;

/// Raw coefficients and softmax weights over answer timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub raw: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Tape handles of an attention trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceVars {
    pub raw: Var,
    pub weights: Var,
}

/// Parameters of the global-local head.
#[derive(Debug, Clone, Copy)]
pub struct GlobalLocalVars {
    /// `[v, tf]`
    pub w1: Var,
    /// `[H, p]`
    pub w2: Var,
    /// `[tf + p, p']`
    pub w3: Var,
    /// `[H, p']`
    pub w4: Var,
    pub alpha: f64,
    pub beta: f64,
}

/// Parameters of the additive local-attention baseline.
#[derive(Debug, Clone, Copy)]
pub struct LocalVars {
    /// `[H, H]`
    pub w_ad: Var,
    /// `[H, H]`
    pub w_qd: Var,
    /// `[H]`
    pub w_ms: Var,
}

/// `x_tf · W` for a sparse TF vector; touches only the rows of present words.
pub fn tf_projection(tape: &mut Tape<'_>, tf: &TfVector, w: Var) -> Result<Var> {
    if tf.is_zero() {
        let cols = tape.value(w).shape().get(1).copied().unwrap_or(0);
        return Ok(tape.constant(Tensor::zeros(&[cols])));
    }
    let (ids, values): (Vec<usize>, Vec<f64>) = tf.entries().iter().copied().unzip();
    let rows = tape.gather_rows(w, &ids, None)?;
    let values = tape.constant(Tensor::vector(values));
    tape.matmul(values, rows)
}

/// Global answer summary `tanh(W1ᵀ a_tf)`.
pub fn global_tf(tape: &mut Tape<'_>, tf: &TfVector, w1: Var) -> Result<Var> {
    let pre = tf_projection(tape, tf, w1)?;
    Ok(tape.tanh(pre))
}

/// `[alpha · x_tf/‖x_tf‖ ‖ beta · x_rnn/‖x_rnn‖]`. A zero part passes through unscaled.
pub fn join(tape: &mut Tape<'_>, x_tf: Var, x_rnn: Var, alpha: f64, beta: f64) -> Result<Var> {
    let a = tape.scale_to_norm(x_tf, alpha)?;
    let b = tape.scale_to_norm(x_rnn, beta)?;
    tape.concat(&[a, b], 0)
}

/// Attention over answer outputs `a_enc: [n, H]` guided by the answer's TF vector and the pooled question `f_q`.
pub fn global_local_attention(
    tape: &mut Tape<'_>,
    a_enc: Var,
    a_tf: &TfVector,
    f_q: Var,
    p: &GlobalLocalVars,
) -> Result<TraceVars> {
    let n = tape.value(a_enc).shape()[0];
    let b_tf = global_tf(tape, a_tf, p.w1)?;
    let tf_part = tape.scale_to_norm(b_tf, p.alpha)?;
    let tf_rows = tape.repeat_rows(tf_part, n)?;
    let b_loc = tape.matmul(a_enc, p.w2)?;
    let loc_rows = tape.row_scale_to_norm(b_loc, p.beta)?;
    let joint = tape.concat(&[tf_rows, loc_rows], 1)?;
    let keys = tape.matmul(joint, p.w3)?;
    let query = tape.matmul(f_q, p.w4)?;
    let raw = tape.row_cosine(keys, query)?;
    let weights = tape.softmax(raw)?;
    Ok(TraceVars { raw, weights })
}

/// `softmax_i( w_msᵀ tanh(W_adᵀ a_i + W_qdᵀ f_q) )`.
pub fn local_attention(
    tape: &mut Tape<'_>,
    a_enc: Var,
    f_q: Var,
    p: &LocalVars,
) -> Result<TraceVars> {
    let n = tape.value(a_enc).shape()[0];
    let hh = tape.value(p.w_ms).len();
    let ad = tape.matmul(a_enc, p.w_ad)?;
    let qd = tape.matmul(f_q, p.w_qd)?;
    let qd_rows = tape.repeat_rows(qd, n)?;
    let m = tape.add(ad, qd_rows)?;
    let act = tape.tanh(m);
    let w = tape.reshape(p.w_ms, &[hh, 1])?;
    let logits = tape.matmul(act, w)?;
    let raw = tape.reshape(logits, &[n])?;
    let weights = tape.softmax(raw)?;
    Ok(TraceVars { raw, weights })
}

/// Weighted average `Σ αᵢ aᵢ` of answer outputs.
pub fn attended_answer(tape: &mut Tape<'_>, a_enc: Var, weights: Var) -> Result<Var> {
    tape.matmul(weights, a_enc)
}

fn dense_tf(tape: &mut Tape<'_>, tf: &TfVector) -> Var {
    tape.constant(Tensor::vector(tf.dense()))
}

/// `join(q_tf, f_q)`.
pub fn final_question_rep(
    tape: &mut Tape<'_>,
    q_tf: &TfVector,
    f_q: Var,
    alpha: f64,
    beta: f64,
) -> Result<Var> {
    let tf = dense_tf(tape, q_tf);
    join(tape, tf, f_q, alpha, beta)
}

/// `join(a_tf, â)`.
pub fn final_answer_rep(
    tape: &mut Tape<'_>,
    a_tf: &TfVector,
    attended: Var,
    alpha: f64,
    beta: f64,
) -> Result<Var> {
    let tf = dense_tf(tape, a_tf);
    join(tape, tf, attended, alpha, beta)
}

/// Cosine similarity of two final representations.
pub fn score(tape: &mut Tape<'_>, q_rep: Var, a_rep: Var) -> Result<Var> {
    tape.cosine(q_rep, a_rep)
}

/// `[tanh(W_ffᵀ x_tf) ‖ pooled]`, the attention-free ablation representation.
pub fn tf_lstm_concat_rep(
    tape: &mut Tape<'_>,
    x_tf: &TfVector,
    pooled: Var,
    w_ff: Var,
) -> Result<Var> {
    let ff = global_tf(tape, x_tf, w_ff)?;
    tape.concat(&[ff, pooled], 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm;
    use crate::text::TfMode;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let mut t = Tensor::zeros(shape);
        t.data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.gen_range(-1.0..1.0));
        t
    }

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn col_dot(x: &[f64], w: &Tensor, col: usize) -> f64 {
        x.iter().enumerate().map(|(k, v)| v * w.row(k)[col]).sum()
    }

    fn times(x: &[f64], w: &Tensor) -> Vec<f64> {
        (0..w.shape()[1]).map(|c| col_dot(x, w, c)).collect()
    }

    fn unit(x: &[f64], target: f64) -> Vec<f64> {
        let n = norm(x);
        x.iter().map(|v| v * target / n).collect()
    }

    fn cos(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (norm(x) * norm(y))
    }

    fn soft(x: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    struct Toy {
        a_enc: Tensor,
        f_q: Tensor,
        w1: Tensor,
        w2: Tensor,
        w3: Tensor,
        w4: Tensor,
        tf: TfVector,
    }

    fn toy(seed: u64, n: usize) -> Toy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, h, tf, p) = (9, 6, 3, 4);
        Toy {
            a_enc: random(&[n, h], &mut rng),
            f_q: random(&[h], &mut rng),
            w1: random(&[v, tf], &mut rng),
            w2: random(&[h, p], &mut rng),
            w3: random(&[tf + p, p], &mut rng),
            w4: random(&[h, p], &mut rng),
            tf: TfVector::new(v, &[2, 5, 5, 7], TfMode::Binary),
        }
    }

    fn run_global(t: &Toy, alpha: f64, beta: f64) -> AttentionTrace {
        let mut tape = Tape::new();
        let p = GlobalLocalVars {
            w1: tape.leaf(&t.w1, false),
            w2: tape.leaf(&t.w2, false),
            w3: tape.leaf(&t.w3, false),
            w4: tape.leaf(&t.w4, false),
            alpha,
            beta,
        };
        let a = tape.leaf(&t.a_enc, false);
        let q = tape.leaf(&t.f_q, false);
        let tr = global_local_attention(&mut tape, a, &t.tf, q, &p).unwrap();
        AttentionTrace {
            raw: tape.value(tr.raw).data().to_vec(),
            weights: tape.value(tr.weights).data().to_vec(),
        }
    }

    #[test]
    fn join_example_and_norms() {
        let (x, y) = (
            Tensor::vector(vec![3.0, 4.0]),
            Tensor::vector(vec![0.0, 2.0]),
        );
        let mut tape = Tape::new();
        let (a, b) = (tape.leaf(&x, false), tape.leaf(&y, false));
        let j = join(&mut tape, a, b, 0.5, 1.0).unwrap();
        let got = tape.value(j).data();
        for (g, e) in got.iter().zip([0.3, 0.4, 0.0, 1.0]) {
            assert!((g - e).abs() < 1e-15);
        }
        let (u, w) = (Tensor::vector(vec![0.6, 0.8]), Tensor::vector(vec![1.0]));
        let (a, b) = (tape.leaf(&u, false), tape.leaf(&w, false));
        let j = join(&mut tape, a, b, 1.0, 1.0).unwrap();
        assert_eq!(tape.value(j).data(), &[0.6, 0.8, 1.0]);
        assert!((tape.value(j).norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn join_passes_zero_part_through() {
        let (x, y) = (Tensor::zeros(&[3]), Tensor::vector(vec![0.0, 5.0]));
        let mut tape = Tape::new();
        let (a, b) = (tape.leaf(&x, false), tape.leaf(&y, false));
        let j = join(&mut tape, a, b, 0.5, 1.0).unwrap();
        assert_eq!(tape.value(j).data(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn scalar_instance_matches_hand_evaluation() {
        // One-dimensional encoder and TF spaces with unit weights; W3 and W4
        // map into a two-dimensional comparison space so each raw coefficient
        // is the cosine of two 2-vectors.
        let a_enc = mat(&[&[0.5], &[-0.5]]);
        let f_q = Tensor::vector(vec![1.0]);
        let one = mat(&[&[1.0]]);
        let w1 = mat(&[&[0.0], &[0.0], &[1.0]]);
        let w3 = Tensor::identity(2);
        let w4 = mat(&[&[1.0, 1.0]]);
        let tf = TfVector::new(3, &[2], TfMode::Binary);
        let mut tape = Tape::new();
        let p = GlobalLocalVars {
            w1: tape.leaf(&w1, false),
            w2: tape.leaf(&one, false),
            w3: tape.leaf(&w3, false),
            w4: tape.leaf(&w4, false),
            alpha: 1.0,
            beta: 1.0,
        };
        let (a, q) = (tape.leaf(&a_enc, false), tape.leaf(&f_q, false));
        let tr = global_local_attention(&mut tape, a, &tf, q, &p).unwrap();
        // b_tf = tanh(1) rescales to 1; b_loc = ±0.5 rescales to ±1.
        // g = (1, 1) and (1, -1); the query is (1, 1): cosines 1 and 0.
        let e = std::f64::consts::E;
        let expect = [e / (1.0 + e), 1.0 / (1.0 + e)];
        assert!((tape.value(tr.raw).data()[0] - 1.0).abs() < 1e-15);
        assert!(tape.value(tr.raw).data()[1].abs() < 1e-15);
        for (g, x) in tape.value(tr.weights).data().iter().zip(expect) {
            assert!((g - x).abs() < 1e-15);
        }
    }

    #[test]
    fn global_local_matches_plain_evaluation() {
        for seed in 0..5 {
            let t = toy(seed, 5);
            let (alpha, beta) = (0.5, 1.0);
            let dense = t.tf.dense();
            let b_tf: Vec<f64> = times(&dense, &t.w1).iter().map(|v| v.tanh()).collect();
            let query = times(t.f_q.data(), &t.w4);
            let raw: Vec<f64> = (0..5)
                .map(|i| {
                    let mut g = unit(&b_tf, alpha);
                    g.extend(unit(&times(t.a_enc.row(i), &t.w2), beta));
                    cos(&times(&g, &t.w3), &query)
                })
                .collect();
            let got = run_global(&t, alpha, beta);
            for (g, e) in got.raw.iter().zip(&raw) {
                assert!((g - e).abs() < 1e-12);
            }
            for (g, e) in got.weights.iter().zip(soft(&raw)) {
                assert!((g - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_rows_and_singletons_get_uniform_weights() {
        let mut t = toy(3, 4);
        let r = t.a_enc.row(0).to_vec();
        for i in 1..4 {
            t.a_enc.row_mut(i).copy_from_slice(&r);
        }
        for w in run_global(&t, 0.5, 1.0).weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
        let t = toy(4, 1);
        assert_eq!(run_global(&t, 0.5, 1.0).weights, vec![1.0]);
    }

    fn run_local(
        a_enc: &Tensor,
        f_q: &Tensor,
        w_ad: &Tensor,
        w_qd: &Tensor,
        w_ms: &Tensor,
    ) -> Vec<f64> {
        let mut tape = Tape::new();
        let p = LocalVars {
            w_ad: tape.leaf(w_ad, false),
            w_qd: tape.leaf(w_qd, false),
            w_ms: tape.leaf(w_ms, false),
        };
        let (a, q) = (tape.leaf(a_enc, false), tape.leaf(f_q, false));
        let tr = local_attention(&mut tape, a, q, &p).unwrap();
        tape.value(tr.weights).data().to_vec()
    }

    #[test]
    fn local_attention_scalar_instance() {
        // H = 1, W_ad = 2, W_qd = -1, w_ms = 3, answer (0.5, 1.0), f_q = 0.25.
        let a_enc = mat(&[&[0.5], &[1.0]]);
        let got = run_local(
            &a_enc,
            &Tensor::vector(vec![0.25]),
            &mat(&[&[2.0]]),
            &mat(&[&[-1.0]]),
            &Tensor::vector(vec![3.0]),
        );
        let logits = [3.0 * (1.0f64 - 0.25).tanh(), 3.0 * (2.0f64 - 0.25).tanh()];
        for (g, e) in got.iter().zip(soft(&logits)) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn local_attention_matches_plain_evaluation_and_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 4;
        let a_enc = random(&[6, h], &mut rng);
        let f_q = random(&[h], &mut rng);
        let w_ad = random(&[h, h], &mut rng);
        let w_qd = random(&[h, h], &mut rng);
        let w_ms = random(&[h], &mut rng);
        let qd = times(f_q.data(), &w_qd);
        let logits: Vec<f64> = (0..6)
            .map(|i| {
                let ad = times(a_enc.row(i), &w_ad);
                (0..h)
                    .map(|r| w_ms.data()[r] * (ad[r] + qd[r]).tanh())
                    .sum()
            })
            .collect();
        let got = run_local(&a_enc, &f_q, &w_ad, &w_qd, &w_ms);
        for (g, e) in got.iter().zip(soft(&logits)) {
            assert!((g - e).abs() < 1e-12);
        }
        let flat = run_local(&a_enc, &f_q, &w_ad, &w_qd, &Tensor::zeros(&[h]));
        assert!(flat.iter().all(|w| (w - 1.0 / 6.0).abs() < 1e-15));
        let mut same = a_enc.clone();
        let r = same.row(2).to_vec();
        (0..6).for_each(|i| same.row_mut(i).copy_from_slice(&r));
        let uni = run_local(&same, &f_q, &w_ad, &w_qd, &w_ms);
        assert!(uni.iter().all(|w| (w - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn attended_answer_examples() {
        let a_enc = mat(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let mut tape = Tape::new();
        let a = tape.leaf(&a_enc, false);
        let w = tape.constant(Tensor::vector(vec![0.25, 0.75]));
        let out = attended_answer(&mut tape, a, w).unwrap();
        assert_eq!(tape.value(out).data(), &[0.5, 1.5]);
        let u = tape.constant(Tensor::vector(vec![0.5, 0.5]));
        let avg = attended_answer(&mut tape, a, u).unwrap();
        let mean = tape.mean_rows(a).unwrap();
        assert_eq!(tape.value(avg).data(), tape.value(mean).data());
        let bad = tape.constant(Tensor::vector(vec![1.0, 0.0, 0.0]));
        assert!(attended_answer(&mut tape, a, bad).is_err());
    }

    #[test]
    fn final_reps_have_expected_shape_and_norms() {
        let tf = TfVector::new(7, &[2, 3, 3], TfMode::Binary);
        let f_q = Tensor::vector(vec![0.3, -0.4, 1.2]);
        let mut tape = Tape::new();
        let q = tape.leaf(&f_q, false);
        let rep = final_question_rep(&mut tape, &tf, q, 0.5, 1.0).unwrap();
        let v = tape.value(rep).data().to_vec();
        assert_eq!(v.len(), 7 + 3);
        assert!((norm(&v[..7]) - 0.5).abs() < 1e-12);
        assert!((norm(&v[7..]) - 1.0).abs() < 1e-12);
        let rep = final_answer_rep(&mut tape, &tf, q, 0.5, 1.0).unwrap();
        assert_eq!(tape.value(rep).data(), &v[..]);
        let empty = TfVector::new(7, &[0, 0], TfMode::Binary);
        let rep = final_question_rep(&mut tape, &empty, q, 0.5, 1.0).unwrap();
        let v = tape.value(rep).data();
        assert!(v[..7].iter().all(|&x| x == 0.0));
        assert!((norm(&v[7..]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.constant(Tensor::vector(vec![-2.0, 1.0]));
        let big = tape.scale(x, 7.5);
        let s = score(&mut tape, x, x).unwrap();
        assert!((tape.value(s).data()[0] - 1.0).abs() < 1e-15);
        let s = score(&mut tape, x, y).unwrap();
        assert_eq!(tape.value(s).data()[0], 0.0);
        let s1 = score(&mut tape, x, y).unwrap();
        let s2 = score(&mut tape, big, y).unwrap();
        assert!((tape.value(s1).data()[0] - tape.value(s2).data()[0]).abs() < 1e-15);
    }

    #[test]
    fn concat_rep_shape_zero_tf_and_difference_from_global_local() {
        let t = toy(8, 4);
        let w_ff = t.w1.clone();
        let pooled = Tensor::vector((0..6).map(|i| i as f64 * 0.1 - 0.2).collect());
        let mut tape = Tape::new();
        let w = tape.leaf(&w_ff, false);
        let p = tape.leaf(&pooled, false);
        let rep = tf_lstm_concat_rep(&mut tape, &t.tf, p, w).unwrap();
        assert_eq!(tape.value(rep).len(), 3 + 6);
        let zero = TfVector::new(9, &[], TfMode::Binary);
        let rep0 = tf_lstm_concat_rep(&mut tape, &zero, p, w).unwrap();
        let v = tape.value(rep0).data();
        assert!(v[..3].iter().all(|&x| x == 0.0));
        assert_eq!(&v[3..], pooled.data());

        // Uniform attention without norm-joining is not what the global-local head computes.
        let q_tf = TfVector::new(9, &[2, 4], TfMode::Binary);
        let enc = tape.leaf(&t.a_enc, false);
        let fq = tape.leaf(&t.f_q, false);
        let q_cat = tf_lstm_concat_rep(&mut tape, &q_tf, fq, w).unwrap();
        let mean = tape.mean_rows(enc).unwrap();
        let a_cat = tf_lstm_concat_rep(&mut tape, &t.tf, mean, w).unwrap();
        let concat_score = score(&mut tape, q_cat, a_cat).unwrap();
        let g = GlobalLocalVars {
            w1: tape.leaf(&t.w1, false),
            w2: tape.leaf(&t.w2, false),
            w3: tape.leaf(&t.w3, false),
            w4: tape.leaf(&t.w4, false),
            alpha: 0.5,
            beta: 1.0,
        };
        let tr = global_local_attention(&mut tape, enc, &t.tf, fq, &g).unwrap();
        let att = attended_answer(&mut tape, enc, tr.weights).unwrap();
        let qr = final_question_rep(&mut tape, &q_tf, fq, 0.5, 1.0).unwrap();
        let ar = final_answer_rep(&mut tape, &t.tf, att, 0.5, 1.0).unwrap();
        let gl_score = score(&mut tape, qr, ar).unwrap();
        assert!((tape.value(concat_score).data()[0] - tape.value(gl_score).data()[0]).abs() > 1e-6);
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(seed in 0u64..10_000, n in 1usize..12) {
            let t = toy(seed, n);
            let tr = run_global(&t, 0.5, 1.0);
            prop_assert_eq!(tr.weights.len(), n);
            prop_assert!((tr.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(tr.weights.iter().all(|&w| w > 0.0));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = 6;
            let local = run_local(
                &t.a_enc,
                &t.f_q,
                &random(&[h, h], &mut rng),
                &random(&[h, h], &mut rng),
                &random(&[h], &mut rng),
            );
            prop_assert!((local.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(local.iter().all(|&w| w > 0.0));
        }

        #[test]
        fn raw_shift_leaves_weights_unchanged(raw in prop::collection::vec(-1.0f64..1.0, 1..10), c in -5.0f64..5.0) {
            let base = crate::numerics::softmax(&raw).unwrap();
            let shifted: Vec<f64> = raw.iter().map(|x| x + c).collect();
            let moved = crate::numerics::softmax(&shifted).unwrap();
            for (a, b) in base.iter().zip(moved) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn join_parts_have_target_norms(
            x in prop::collection::vec(-3.0f64..3.0, 1..6),
            y in prop::collection::vec(-3.0f64..3.0, 1..6),
            alpha in 0.1f64..2.0,
            beta in 0.1f64..2.0,
        ) {
            prop_assume!(norm(&x) > 1e-3 && norm(&y) > 1e-3);
            let (tx, ty) = (Tensor::vector(x.clone()), Tensor::vector(y));
            let mut tape = Tape::new();
            let (a, b) = (tape.leaf(&tx, false), tape.leaf(&ty, false));
            let j = join(&mut tape, a, b, alpha, beta).unwrap();
            let v = tape.value(j).data();
            prop_assert!((norm(&v[..x.len()]) - alpha).abs() < 1e-9);
            prop_assert!((norm(&v[x.len()..]) - beta).abs() < 1e-9);
        }

        #[test]
        fn global_tf_ignores_order_and_repetition(ids in prop::collection::vec(0usize..9, 0..12), seed in 0u64..100) {
            let t = toy(seed, 1);
            let mut rev = ids.clone();
            rev.reverse();
            let doubled = [ids.clone(), ids.clone()].concat();
            let eval = |s: &[usize]| {
                let mut tape = Tape::new();
                let w = tape.leaf(&t.w1, false);
                let b = global_tf(&mut tape, &TfVector::new(9, s, TfMode::Binary), w).unwrap();
                tape.value(b).data().to_vec()
            };
            let base = eval(&ids);
            prop_assert_eq!(&base, &eval(&rev));
            prop_assert_eq!(&base, &eval(&doubled));
        }
    }
}
