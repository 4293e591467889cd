use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference check of `analytic` against `f` around `point`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    step: f64,
) -> GradCheck {
    compare(point, analytic, |x, i| {
        let orig = x[i];
        let (hi, lo) = (orig + step, orig - step);
        x[i] = hi;
        let up = f(x);
        x[i] = lo;
        let down = f(x);
        x[i] = orig;
        // dividing by the representable step removes the rounding of `x ± h`
        (up - down) / (hi - lo)
    })
}

/// Like [`grad_check`] with the fourth-order five-point central stencil.
pub fn grad_check_five_point(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    step: f64,
) -> GradCheck {
    compare(point, analytic, |x, i| {
        let orig = x[i];
        let mut at = |d: f64| {
            x[i] = orig + d;
            let v = f(x);
            x[i] = orig;
            v
        };
        let (p2, p1, m1, m2) = (at(2.0 * step), at(step), at(-step), at(-2.0 * step));
        (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step)
    })
}

fn compare(
    point: &[f64],
    analytic: &[f64],
    mut numeric_at: impl FnMut(&mut [f64], usize) -> f64,
) -> GradCheck {
    assert_eq!(
        point.len(),
        analytic.len(),
        "gradient length must match the point"
    );
    let mut x = point.to_vec();
    let mut numeric = Vec::with_capacity(x.len());
    let (mut worst, mut worst_index) = (0.0, 0);
    for (i, &a) in analytic.iter().enumerate() {
        let n = numeric_at(&mut x, i);
        let err = match relative_error(a, n) {
            e if e.is_nan() => f64::INFINITY,
            e => e,
        };
        if err > worst {
            worst = err;
            worst_index = i;
        }
        numeric.push(n);
    }
    GradCheck {
        max_relative_error: worst,
        worst_index,
        analytic: analytic.to_vec(),
        numeric,
    }
}

/// Checks the tape gradient of the scalar built by `build` with respect to its input.
pub fn check_tape_gradient<F>(point: &Tensor, build: F, step: f64) -> Result<GradCheck>
where
    F: for<'a> Fn(&mut Tape<'a>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point, true);
    let loss = build(&mut tape, x)?;
    let grads = tape.backward(loss)?;
    let analytic = grads
        .slice(x)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; point.len()]);

    let eval = |data: &[f64]| -> Result<f64> {
        let t = Tensor::new(point.shape().to_vec(), data.to_vec())?;
        let mut tape = Tape::new();
        let x = tape.constant(t);
        let y = build(&mut tape, x)?;
        Ok(tape.value(y).data()[0])
    };
    eval(point.data())?;
    Ok(grad_check(
        |d| eval(d).unwrap_or(f64::NAN),
        point.data(),
        &analytic,
        step,
    ))
}
