//! Synthetic fine-grained identity data.
//!
//! Identities come in confusable pairs. The generator works in a feature
//! space of dimension `F` spanned by a random orthonormal basis drawn from
//! the seed. The first `signal_dim` basis vectors form the identity
//! subspace, the rest the nuisance subspace.
//!
//! * Pair `p` has a base point `spread · Σ g_k q_k` (`g ~ N(0, 1)`) in the
//!   identity subspace and a random unit direction `v_p` in the same
//!   subspace. Its two identities sit at `base ± (δ/2) v_p`, so their
//!   centers are exactly `δ` apart.
//! * Every (identity, camera) combination has a fixed offset drawn from
//!   `N(0, scale²/m · I)` over the `m`-dimensional nuisance subspace (over
//!   the whole space when `signal_dim == F`), so its expected norm is about
//!   `camera_offset_scale`.
//! * A sample is `center + offset(identity, camera) + σ · N(0, I_F)`, with
//!   cameras assigned round-robin over the identity's samples.
//!
//! The basis comes from its own substream, and each pair draws from a
//! substream keyed by its index, so the first `n` pairs of a larger dataset
//! are identical to a dataset of `n` pairs with the same seed.

use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_identity_pairs: usize,
    pub samples_per_identity: usize,
    pub feature_dim: usize,
    /// Distance between the two centers of a confusable pair.
    pub pair_separation: f64,
    /// Per-coordinate standard deviation of sample noise.
    pub intra_noise: f64,
    pub camera_count: usize,
    pub camera_offset_scale: f64,
    /// Dimension of the identity subspace; 0 means `feature_dim / 4`
    /// (at least 1).
    pub signal_dim: usize,
    /// Standard deviation of pair base points along each identity direction.
    pub center_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_identity_pairs: 50,
            samples_per_identity: 20,
            feature_dim: 32,
            pair_separation: 2.0,
            intra_noise: 1.0,
            camera_count: 4,
            camera_offset_scale: 1.0,
            signal_dim: 0,
            center_spread: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 1 {
            return Err(Error::config("feature_dim must be >= 1"));
        }
        if self.num_identity_pairs < 1 || self.samples_per_identity < 1 || self.camera_count < 1 {
            return Err(Error::config(
                "num_identity_pairs, samples_per_identity and camera_count must be >= 1",
            ));
        }
        if !(self.pair_separation >= 0.0) || !self.pair_separation.is_finite() {
            return Err(Error::config("pair_separation must be finite and >= 0"));
        }
        if !(self.intra_noise > 0.0) || !self.intra_noise.is_finite() {
            return Err(Error::config("intra_noise must be finite and > 0"));
        }
        if !(self.camera_offset_scale >= 0.0) || !(self.center_spread >= 0.0) {
            return Err(Error::config(
                "camera_offset_scale and center_spread must be >= 0",
            ));
        }
        if self.signal_dim > self.feature_dim {
            return Err(Error::config("signal_dim cannot exceed feature_dim"));
        }
        Ok(())
    }

    pub fn effective_signal_dim(&self) -> usize {
        if self.signal_dim == 0 {
            (self.feature_dim / 4).max(1)
        } else {
            self.signal_dim
        }
    }

    pub fn num_identities(&self) -> usize {
        2 * self.num_identity_pairs
    }
}

/// Generates `2 · num_identity_pairs · samples_per_identity` samples.
/// Identity `2p` and `2p + 1` form pair `p`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let f = cfg.feature_dim;
    let s = cfg.effective_signal_dim();
    let basis = random_orthonormal_basis(f, &mut Rng::substream(cfg.seed, u64::MAX));
    let (signal, nuisance) = basis.split_at(s);
    let offset_space: &[Vec<f64>] = if nuisance.is_empty() { &basis } else { nuisance };

    let n = cfg.num_identities() * cfg.samples_per_identity;
    let mut data = Vec::with_capacity(n * f);
    let mut identity = Vec::with_capacity(n);
    let mut camera = Vec::with_capacity(n);

    for pair in 0..cfg.num_identity_pairs {
        let mut rng = Rng::substream(cfg.seed, pair as u64);
        let mut base = vec![0.0; f];
        for q in signal {
            axpy(&mut base, cfg.center_spread * rng.normal(), q);
        }
        let coeffs: Vec<f64> = (0..s).map(|_| rng.normal()).collect();
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
        let mut dir = vec![0.0; f];
        for (q, c) in signal.iter().zip(&coeffs) {
            axpy(&mut dir, c / norm, q);
        }

        for side in [-0.5, 0.5] {
            let id = identity_of(pair, side);
            let mut center = base.clone();
            axpy(&mut center, side * cfg.pair_separation, &dir);

            let offset_std = cfg.camera_offset_scale / (offset_space.len() as f64).sqrt();
            let offsets: Vec<Vec<f64>> = (0..cfg.camera_count)
                .map(|_| {
                    let mut o = vec![0.0; f];
                    for q in offset_space {
                        axpy(&mut o, offset_std * rng.normal(), q);
                    }
                    o
                })
                .collect();

            for k in 0..cfg.samples_per_identity {
                let cam = k % cfg.camera_count;
                for d in 0..f {
                    data.push(center[d] + offsets[cam][d] + cfg.intra_noise * rng.normal());
                }
                identity.push(id);
                camera.push(cam);
            }
        }
    }
    SampleSet::new(Matrix::from_vec(n, f, data)?, identity, camera)
}

/// Generates `train_pairs + test_pairs` pairs from one seed and splits them
/// at the pair boundary, so both sets share the feature-space structure
/// but no identities.
pub fn generate_train_test(cfg: &SynthConfig, test_pairs: usize) -> Result<(SampleSet, SampleSet)> {
    let mut all_cfg = cfg.clone();
    all_cfg.num_identity_pairs += test_pairs;
    let all = generate_synthetic(&all_cfg)?;
    let cut = cfg.num_identities();
    let train = all.filter_identities(|id| id < cut);
    let test = all.filter_identities(|id| id >= cut);
    Ok((train, test))
}

fn identity_of(pair: usize, side: f64) -> usize {
    2 * pair + usize::from(side > 0.0)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Modified Gram-Schmidt on a Gaussian matrix; returns `n` orthonormal
/// vectors of length `n`.
fn random_orthonormal_basis(n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            axpy(&mut v, -dot, q);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        // A near-dependent draw is discarded and redrawn.
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    basis
}
