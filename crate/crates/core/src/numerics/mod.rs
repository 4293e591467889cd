//! Dense `f64` tensors, a reverse-mode tape and a finite-difference gradient checker.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    check_tape_gradient, grad_check, grad_check_five_point, relative_error, GradCheck, DEFAULT_STEP,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{dot, norm, Tensor};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x.is_empty() {
        return Err(Error::invalid("softmax", "empty input"));
    }
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "cosine",
            left: vec![u.len()],
            right: vec![v.len()],
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu <= NORM_EPS || nv <= NORM_EPS {
        return Err(Error::DegenerateCosine);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
