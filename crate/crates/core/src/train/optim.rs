//! SGD with momentum and Adam.
//!
//! SGD: `v ← μ·v + g`, `p ← p − lr·v`.
//! Adam: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
//! `p ← p − lr · (m/(1−β₁ᵗ)) / (sqrt(v/(1−β₂ᵗ)) + ε)`.
//! Weight decay, when non-zero, is added to the gradient as `wd·p` first.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            lr: 1e-3,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::config("momentum must be in [0, 1)"))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) =>
            {
                Err(Error::config("Adam needs beta1, beta2 in [0, 1) and eps > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-block moment buffers, created lazily on the first step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

/// Applies one update to every parameter block. Gradients are checked for
/// finiteness before anything is modified.
pub fn optimizer_step(
    params: &mut [(String, &mut [f64])],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape {
            op: "optimizer blocks",
            left: (params.len(), 0),
            right: (grads.len(), 0),
        });
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::Shape {
                op: "optimizer block",
                left: (p.len(), 1),
                right: (g.len(), 1),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    if state.first.is_empty() {
        state.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
    }
    state.step += 1;
    let wd = cfg.weight_decay;
    for (b, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[b];
        match cfg.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for i in 0..p.len() {
                    let gi = g[i] + wd * p[i];
                    m[i] = momentum * m[i] + gi;
                    p[i] -= cfg.lr * m[i];
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let v = &mut state.second[b];
                let t = state.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..p.len() {
                    let gi = g[i] + wd * p[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                    p[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(p: f64, g: f64, cfg: &OptimizerConfig, state: &mut OptimizerState) -> f64 {
        let mut buf = [p];
        let mut blocks = vec![("p".to_string(), &mut buf[..])];
        optimizer_step(&mut blocks, &[&[g]], state, cfg).unwrap();
        buf[0]
    }

    fn sgd(lr: f64, momentum: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum { momentum },
            lr,
            weight_decay: 0.0,
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        for cfg in [sgd(0.1, 0.9), OptimizerConfig::default()] {
            let mut st = OptimizerState::default();
            assert_eq!(step_scalar(1.5, 0.0, &cfg, &mut st), 1.5);
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let mut st = OptimizerState::default();
        let p = step_scalar(1.0, 2.0, &sgd(0.1, 0.0), &mut st);
        assert!((p - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let cfg = sgd(0.1, 0.5);
        let mut st = OptimizerState::default();
        let p1 = step_scalar(0.0, 1.0, &cfg, &mut st);
        let p2 = step_scalar(p1, 1.0, &cfg, &mut st);
        assert!((p1 + 0.1).abs() < 1e-15);
        assert!((p2 - (p1 - 0.15)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        for g in [1e-3, 1.0, 1e4, -7.0] {
            let mut st = OptimizerState::default();
            let cfg = OptimizerConfig::default();
            let p = step_scalar(0.0, g, &cfg, &mut st);
            assert!((p.abs() - cfg.lr).abs() < 1e-6 * cfg.lr + 1e-8, "{g}: {p}");
            assert_eq!(p.signum(), -g.signum());
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut a = [1.0];
        let mut b = [1.0];
        let mut blocks = vec![("layer0.weight".to_string(), &mut a[..]), ("classifier".to_string(), &mut b[..])];
        let err = optimizer_step(&mut blocks, &[&[0.5], &[f64::NAN]], &mut OptimizerState::default(), &OptimizerConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("classifier"));
        assert_eq!(a[0], 1.0);
    }
}
