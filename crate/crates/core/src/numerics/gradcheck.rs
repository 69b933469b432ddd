//! Central finite differences, the reference every analytic gradient in the
//! crate is checked against.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_STEP: f64 = 1e-4;

/// Central-difference gradient of `f` at `x`, one entry at a time.
pub fn finite_diff_grad<F>(mut f: F, x: &Matrix, h: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::config(format!("finite difference step must be > 0, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let orig = x[(i, j)];
            probe[(i, j)] = orig + h;
            let plus = f(&probe)?;
            probe[(i, j)] = orig - h;
            let minus = f(&probe)?;
            probe[(i, j)] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective at perturbed entry ({i}, {j})"
                )));
            }
            grad[(i, j)] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Norm-wise relative error `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`; 0 when both are 0.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    relative_error_slices(a.as_slice(), b.as_slice())
}

pub fn relative_error_slices(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}
