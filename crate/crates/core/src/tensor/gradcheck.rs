use std::cell::RefCell;

use super::{GradTape, Tensor, Var};
use crate::error::{Error, Result};

/// Magnitude below which gradient comparisons fall back to absolute error.
pub const GRAD_REL_FLOOR: f64 = 1e-3;

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &Tensor, h: f64) -> Tensor
where
    F: Fn(&Tensor) -> f64,
{
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.numel()];
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        *g = (plus - minus) / (2.0 * h);
    }
    Tensor::from_parts(x.shape().to_vec(), grad)
}

/// `|a - b| / max(|a|, |b|, GRAD_REL_FLOOR)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_REL_FLOOR)
}

/// Largest coordinate-wise [`rel_error`] between two equal-length slices;
/// infinite if any entry is NaN.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter()
        .zip(b)
        .map(|(&a, &b)| {
            let e = rel_error(a, b);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

/// Builds the scalar loss `build(tape, params)` once with tracked
/// parameters and compares every parameter's tape gradient with central
/// differences of the same function. Returns the largest [`rel_error`].
pub fn check_tape_gradients<F>(params: &[Tensor], build: F, h: f64) -> Result<f64>
where
    F: Fn(&mut GradTape, &[Var]) -> Result<Var>,
{
    let mut tape = GradTape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut worst: f64 = 0.0;
    for (i, p) in params.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(p.shape()));
        let eval = |x: &Tensor| -> f64 {
            let mut t = GradTape::new();
            let vs: Vec<Var> = params
                .iter()
                .enumerate()
                .map(|(j, q)| t.constant(if j == i { x.clone() } else { q.clone() }))
                .collect();
            match build(&mut t, &vs).and_then(|l| t.value(l).item()) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let numeric = finite_diff_grad(eval, p, h);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        worst = worst.max(max_rel_error(analytic.data(), numeric.data()));
    }
    Ok(worst)
}
