//! Finite-difference gradient checks for every loss and for the full model,
//! as run by the `grad-check` command.
//!
//! Each check draws seeded random batches (16 rows, 8 embedding dims, 5
//! classes) and compares the analytic gradient with central differences.
//! Batches whose distances sit within `KINK_GAP` of a hinge, a mining tie or
//! a ReLU kink are redrawn, since the loss is not differentiable there.

use crate::error::{Error, Result};
use crate::geometry::{pairwise_distances, DistanceKind};
use crate::losses::{
    cross_entropy_loss, fidi_loss, FidiConfig, LossKind, MetricLoss, TripletConfig,
};
use crate::model::MlpModel;
use crate::numerics::{finite_diff_grad, relative_error_slices, Matrix, Rng, DEFAULT_STEP};

pub const GRAD_TOLERANCE: f64 = 1e-5;
pub const CHECK_BATCH: usize = 16;
pub const CHECK_DIM: usize = 8;
pub const CHECK_CLASSES: usize = 5;
const CHECK_INPUT: usize = 10;
const CHECK_HIDDEN: usize = 12;
const KINK_GAP: f64 = 1e-3;

/// Everything `grad-check` can test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckTarget {
    Loss(LossKind),
    CrossEntropy,
    Model,
}

impl CheckTarget {
    pub const ALL: [CheckTarget; 7] = [
        CheckTarget::Loss(LossKind::Fidi),
        CheckTarget::Loss(LossKind::Tl),
        CheckTarget::Loss(LossKind::Btl),
        CheckTarget::Loss(LossKind::Cl),
        CheckTarget::Loss(LossKind::Bcl),
        CheckTarget::CrossEntropy,
        CheckTarget::Model,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckTarget::Loss(k) => k.name(),
            CheckTarget::CrossEntropy => "ce",
            CheckTarget::Model => "model",
        }
    }
}

impl std::str::FromStr for CheckTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckTarget::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown check \"{s}\"")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub target: CheckTarget,
    pub batches: usize,
    pub max_rel_error: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRAD_TOLERANCE
    }
}

/// Runs `batches` random batches per target. `corrupt` scales the analytic
/// gradient of one target by 1.01, a negative control for the checker.
pub fn run_grad_checks(batches: usize, seed: u64, corrupt: Option<CheckTarget>) -> Result<Vec<CheckRow>> {
    CheckTarget::ALL
        .into_iter()
        .enumerate()
        .map(|(t, target)| {
            let mut worst: f64 = 0.0;
            for b in 0..batches {
                let mut rng = Rng::substream(seed, (t as u64) << 32 | b as u64);
                let (analytic, numeric) = match target {
                    CheckTarget::Loss(kind) => check_metric(kind, &mut rng)?,
                    CheckTarget::CrossEntropy => check_ce(&mut rng)?,
                    CheckTarget::Model => check_model(&mut rng)?,
                };
                let analytic = if corrupt == Some(target) {
                    analytic.iter().map(|g| g * 1.01).collect()
                } else {
                    analytic
                };
                worst = worst.max(relative_error_slices(&analytic, &numeric));
            }
            Ok(CheckRow {
                target,
                batches,
                max_rel_error: worst,
            })
        })
        .collect()
}

fn labels() -> Vec<usize> {
    (0..CHECK_BATCH).map(|i| i % CHECK_CLASSES).collect()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let v = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, v).expect("normal draws are finite")
}

fn metric_loss(kind: LossKind) -> MetricLoss {
    MetricLoss::new(kind, &FidiConfig::default(), &TripletConfig::default())
}

/// True when no hinge, hardest-pair tie or margin boundary lies within
/// `KINK_GAP` of the batch's distances.
fn clear_of_kinks(e: &Matrix, labels: &[usize], margin: f64) -> Result<bool> {
    let d = pairwise_distances(e, DistanceKind::default())?;
    let b = labels.len();
    for a in 0..b {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for j in (0..b).filter(|&j| j != a) {
            if labels[j] == labels[a] {
                pos.push(d[(a, j)]);
            } else {
                neg.push(d[(a, j)]);
            }
        }
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        if pos.len() > 1 && pos[pos.len() - 1] - pos[pos.len() - 2] < KINK_GAP {
            return Ok(false);
        }
        if neg.len() > 1 && neg[1] - neg[0] < KINK_GAP {
            return Ok(false);
        }
        for n in &neg {
            if (margin - n).abs() < KINK_GAP {
                return Ok(false);
            }
            if pos.iter().any(|p| (p - n + margin).abs() < KINK_GAP) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn check_metric(kind: LossKind, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let labels = labels();
    let loss = metric_loss(kind);
    let margin = TripletConfig::default().margin;
    let e = loop {
        let e = random_matrix(CHECK_BATCH, CHECK_DIM, rng);
        if clear_of_kinks(&e, &labels, margin)? {
            break e;
        }
    };
    let analytic = loss.compute(&e, &labels)?.grad_embeddings;
    let numeric = finite_diff_grad(|m| Ok(loss.compute(m, &labels)?.value), &e, DEFAULT_STEP)?;
    Ok((analytic.as_slice().to_vec(), numeric.as_slice().to_vec()))
}

fn check_ce(rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let labels = labels();
    let z = random_matrix(CHECK_BATCH, CHECK_CLASSES, rng);
    let analytic = cross_entropy_loss(&z, &labels)?
        .grad_logits
        .expect("cross entropy sets logit gradients");
    let numeric = finite_diff_grad(|m| Ok(cross_entropy_loss(m, &labels)?.value), &z, DEFAULT_STEP)?;
    Ok((analytic.as_slice().to_vec(), numeric.as_slice().to_vec()))
}

fn model_objective(m: &MlpModel, x: &Matrix, labels: &[usize]) -> Result<f64> {
    let out = m.forward_train_pure(x)?;
    Ok(fidi_loss(&out.embeddings, labels, &FidiConfig::default())?.value + cross_entropy_loss(&out.logits, labels)?.value)
}

/// FIDI + cross-entropy through a batch-normed MLP, over every parameter.
fn check_model(rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let labels = labels();
    let (model, x, out) = loop {
        let model = MlpModel::init(&[CHECK_INPUT, CHECK_HIDDEN, CHECK_DIM], CHECK_CLASSES, true, rng)?;
        let x = random_matrix(CHECK_BATCH, CHECK_INPUT, rng);
        let out = model.forward_train_pure(&x)?;
        let hidden = &out.cache.pre_activations[..out.cache.pre_activations.len() - 1];
        if hidden.iter().all(|z| z.as_slice().iter().all(|v| v.abs() >= KINK_GAP)) {
            break (model, x, out);
        }
    };
    let ge = fidi_loss(&out.embeddings, &labels, &FidiConfig::default())?.grad_embeddings;
    let gl = cross_entropy_loss(&out.logits, &labels)?
        .grad_logits
        .expect("cross entropy sets logit gradients");
    let analytic = model.backward(&out.cache, &ge, &gl)?.flatten();

    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    let blocks = probe.param_blocks_mut().len();
    for blk in 0..blocks {
        let len = probe.param_blocks_mut()[blk].1.len();
        for k in 0..len {
            let orig = probe.param_blocks_mut()[blk].1[k];
            probe.param_blocks_mut()[blk].1[k] = orig + DEFAULT_STEP;
            let plus = model_objective(&probe, &x, &labels)?;
            probe.param_blocks_mut()[blk].1[k] = orig - DEFAULT_STEP;
            let minus = model_objective(&probe, &x, &labels)?;
            probe.param_blocks_mut()[blk].1[k] = orig;
            numeric.push((plus - minus) / (2.0 * DEFAULT_STEP));
        }
    }
    Ok((analytic, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_target_passes() {
        let rows = run_grad_checks(3, 0, None).unwrap();
        assert_eq!(rows.len(), 7);
        for r in &rows {
            assert!(r.passed(), "{}: {}", r.target.name(), r.max_rel_error);
        }
    }

    #[test]
    fn corruption_is_caught() {
        let rows = run_grad_checks(1, 0, Some(CheckTarget::Loss(LossKind::Btl))).unwrap();
        for r in rows {
            assert_eq!(r.passed(), r.target != CheckTarget::Loss(LossKind::Btl), "{}", r.target.name());
        }
    }

    #[test]
    fn names_round_trip() {
        for t in CheckTarget::ALL {
            assert_eq!(t.name().parse::<CheckTarget>().unwrap(), t);
        }
        assert!("xx".parse::<CheckTarget>().is_err());
    }
}
