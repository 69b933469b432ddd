use crate::numerics::Matrix;

/// Per-feature batch normalization with learnable scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight of the old running value: `r ← momentum·r + (1 − momentum)·batch`.
    pub momentum: f64,
    pub eps: f64,
}

/// Intermediates of a normalization pass needed by the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
    pub batch_stats: bool,
}

impl BatchNorm {
    pub fn new(dim: usize, momentum: f64, eps: f64) -> Self {
        BatchNorm {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum,
            eps,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Normalizes with batch statistics (`batch_stats`) or running ones.
    /// Also returns the batch mean and unbiased variance when batch
    /// statistics were used.
    pub(crate) fn apply(&self, x: &Matrix, batch_stats: bool) -> (Matrix, BnCache, Option<(Vec<f64>, Vec<f64>)>) {
        let (b, d) = x.shape();
        let (mean, var, stats) = if batch_stats {
            let mut mean = vec![0.0; d];
            for i in 0..b {
                for (m, v) in mean.iter_mut().zip(x.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= b as f64);
            let mut var = vec![0.0; d];
            for i in 0..b {
                for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            let unbiased: Vec<f64> = var.iter().map(|s| s / (b as f64 - 1.0)).collect();
            var.iter_mut().for_each(|s| *s /= b as f64);
            (mean.clone(), var, Some((mean, unbiased)))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut normalized = Matrix::zeros(b, d);
        let mut out = Matrix::zeros(b, d);
        for i in 0..b {
            for j in 0..d {
                let xh = (x[(i, j)] - mean[j]) * inv_std[j];
                normalized[(i, j)] = xh;
                out[(i, j)] = self.scale[j] * xh + self.shift[j];
            }
        }
        (
            out,
            BnCache {
                normalized,
                inv_std,
                batch_stats,
            },
            stats,
        )
    }

    pub(crate) fn update_running(&mut self, mean: &[f64], unbiased_var: &[f64]) {
        let m = self.momentum;
        for j in 0..self.dim() {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * unbiased_var[j];
        }
    }

    /// Returns `(∂/∂input, ∂/∂scale, ∂/∂shift)`.
    pub(crate) fn backward(&self, cache: &BnCache, grad_out: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let (b, d) = grad_out.shape();
        let xh = &cache.normalized;
        let mut dscale = vec![0.0; d];
        let mut dshift = vec![0.0; d];
        for i in 0..b {
            for j in 0..d {
                dscale[j] += grad_out[(i, j)] * xh[(i, j)];
                dshift[j] += grad_out[(i, j)];
            }
        }
        let mut dx = Matrix::zeros(b, d);
        if cache.batch_stats {
            let n = b as f64;
            for j in 0..d {
                let g = self.scale[j];
                // Σ dxhat and Σ dxhat·xhat per feature.
                let sum_dxh = g * dshift[j];
                let sum_dxh_xh = g * dscale[j];
                for i in 0..b {
                    let dxh = g * grad_out[(i, j)];
                    dx[(i, j)] = cache.inv_std[j] / n * (n * dxh - sum_dxh - xh[(i, j)] * sum_dxh_xh);
                }
            }
        } else {
            for i in 0..b {
                for j in 0..d {
                    dx[(i, j)] = grad_out[(i, j)] * self.scale[j] * cache.inv_std[j];
                }
            }
        }
        (dx, dscale, dshift)
    }
}
