//! Fine-grained difference-aware (FIDI) pairwise loss.
//!
//! For a pair with predicted similarity `u ∈ (0, 1]` and label `k ∈ {0, 1}`
//! the loss is the symmetrized, α-smoothed relative entropy
//!
//! ```text
//! ℓ(u, k) = u·log(α·u / ((α−1)·u + k)) + k·log(α·k / ((α−1)·k + u))
//! ```
//!
//! with `0·log 0 = 0`. Swapping `u` and `k` leaves it unchanged, it is zero
//! iff `u = k`, and as `u → 0` it tends to 0 for `k = 0` and to
//! `log(α/(α−1))` for `k = 1`, so far-apart positives cost a bounded amount.

use crate::error::{Error, Result};
use crate::geometry::{distance_backward, pairwise_distances, prob_of_distance, DistanceKind, ProbMap};
use crate::losses::{check_labels, mine_hardest, LossMeta, LossOutput};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    /// Every unordered pair of distinct batch rows.
    AllPairs,
    /// Per anchor, its farthest positive and nearest negative.
    HardPairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidiConfig {
    pub alpha: f64,
    pub prob_map: ProbMap,
    pub distance: DistanceKind,
    pub pair_policy: PairPolicy,
    pub reduction: Reduction,
}

impl Default for FidiConfig {
    fn default() -> Self {
        FidiConfig {
            alpha: 1.05,
            prob_map: ProbMap::Exponential { beta: 0.5 },
            distance: DistanceKind::default(),
            pair_policy: PairPolicy::AllPairs,
            reduction: Reduction::Mean,
        }
    }
}

impl FidiConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.prob_map.validate()?;
        self.distance.validate()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::config(format!("alpha must be finite and > 1, got {alpha}")));
    }
    Ok(())
}

#[inline]
fn half_term(a: f64, b: f64, alpha: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (alpha * a / ((alpha - 1.0) * a + b)).ln()
    }
}

#[inline]
fn pair_value(a: f64, b: f64, alpha: f64) -> f64 {
    half_term(a, b, alpha) + half_term(b, a, alpha)
}

/// `∂ℓ(a, b)/∂a` for `a > 0`.
#[inline]
fn pair_grad(a: f64, b: f64, alpha: f64) -> f64 {
    let own = (alpha * a / ((alpha - 1.0) * a + b)).ln() + b / ((alpha - 1.0) * a + b);
    let mirrored = if b == 0.0 { 0.0 } else { b / ((alpha - 1.0) * b + a) };
    own - mirrored
}

/// Per-pair loss `ℓ(a, b)`; symmetric in its first two arguments.
pub fn fidi_pair_loss(a: f64, b: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    for v in [a, b] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("probabilities must lie in [0, 1], got {v}")));
        }
    }
    Ok(pair_value(a, b, alpha))
}

/// `∂ℓ(a, b)/∂a`, defined for `a ∈ (0, 1]`.
pub fn fidi_pair_grad(a: f64, b: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(a > 0.0 && a <= 1.0) || !(0.0..=1.0).contains(&b) {
        return Err(Error::Domain(format!("need a in (0, 1], b in [0, 1]; got a = {a}, b = {b}")));
    }
    Ok(pair_grad(a, b, alpha))
}

/// Limit of the positive-pair loss as the similarity vanishes: `log(α/(α−1))`.
pub fn fidi_bound(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((alpha / (alpha - 1.0)).ln())
}

/// FIDI loss over a batch of embeddings.
pub fn fidi_loss(e: &Matrix, labels: &[usize], cfg: &FidiConfig) -> Result<LossOutput> {
    cfg.validate()?;
    check_labels(e, labels)?;
    let b = e.rows();
    let d = pairwise_distances(e, cfg.distance)?;

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut meta = LossMeta::default();
    match cfg.pair_policy {
        PairPolicy::AllPairs => {
            for i in 0..b {
                for j in i + 1..b {
                    pairs.push((i, j));
                }
            }
        }
        PairPolicy::HardPairs => {
            for (a, mined) in mine_hardest(&d, labels).into_iter().enumerate() {
                match mined {
                    Some((p, n)) => {
                        pairs.push((a, p));
                        pairs.push((a, n));
                    }
                    None => meta.skipped_anchors += 1,
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairs(format!(
            "FIDI loss over {b} rows with policy {:?}",
            cfg.pair_policy
        )));
    }
    let scale = match cfg.reduction {
        Reduction::Mean => 1.0 / pairs.len() as f64,
        Reduction::Sum => 1.0,
    };

    let mut value = 0.0;
    let mut upstream = Matrix::zeros(b, b);
    for &(i, j) in &pairs {
        let k = if labels[i] == labels[j] {
            meta.positive_terms += 1;
            1.0
        } else {
            meta.negative_terms += 1;
            0.0
        };
        let (u, du_dd) = prob_of_distance(d[(i, j)], cfg.prob_map)?;
        value += pair_value(u, k, cfg.alpha);
        upstream[(i, j)] += scale * pair_grad(u, k, cfg.alpha) * du_dd;
    }
    meta.terms = pairs.len();
    let value = value * scale;
    if !value.is_finite() {
        return Err(Error::NonFinite("FIDI loss value".into()));
    }
    Ok(LossOutput {
        value,
        grad_embeddings: distance_backward(e, &upstream, cfg.distance)?,
        grad_logits: None,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Rng, DEFAULT_STEP};

    // High-precision reference values (40-digit evaluation of the closed form).
    const L_HALF_ONE_105: f64 = 0.312_102_350_434_610_05;
    const LOG_21: f64 = 3.044_522_437_723_423;

    #[test]
    fn fixed_point_and_reference_values() {
        assert_eq!(fidi_pair_loss(1.0, 1.0, 1.05).unwrap(), 0.0);
        assert!((fidi_pair_loss(0.5, 1.0, 1.05).unwrap() - L_HALF_ONE_105).abs() < 1e-12);
        assert!((fidi_pair_loss(1e-15, 1.0, 1.05).unwrap() - LOG_21).abs() < 1e-12);
        assert!((fidi_pair_loss(0.3, 0.7, 1.05).unwrap() - 0.304_105_006_010_926_8).abs() < 1e-12);
        assert!((fidi_pair_loss(0.9, 0.0, 2.0).unwrap() - 0.623_832_462_503_950_8).abs() < 1e-12);
    }

    #[test]
    fn alpha_must_exceed_one() {
        for a in [1.0, 0.5, f64::NAN] {
            assert!(matches!(fidi_pair_loss(0.5, 1.0, a), Err(Error::Config(_))));
            assert!(matches!(fidi_bound(a), Err(Error::Config(_))));
        }
    }

    #[test]
    fn bound_values() {
        assert!((fidi_bound(2.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((fidi_bound(1.05).unwrap() - LOG_21).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for alpha in [1.01, 1.5, 3.0, 10.0, 1e3, 1e6] {
            let b = fidi_bound(alpha).unwrap();
            assert!(b < prev && b > 0.0);
            prev = b;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn grid_symmetric_nonnegative() {
        for alpha in [1.05, 1.2, 2.0] {
            for i in 0..=10 {
                for j in 0..=10 {
                    let (a, b) = (i as f64 / 10.0, j as f64 / 10.0);
                    let ab = fidi_pair_loss(a, b, alpha).unwrap();
                    let ba = fidi_pair_loss(b, a, alpha).unwrap();
                    assert_eq!(ab.to_bits(), ba.to_bits());
                    if i == j {
                        assert!(ab.abs() < 1e-12);
                    } else {
                        assert!(ab > 0.0, "ℓ({a}, {b}) = {ab}");
                    }
                }
            }
        }
    }

    #[test]
    fn pair_grad_matches_differences() {
        let h = 1e-6;
        for alpha in [1.05, 1.2, 2.0] {
            for &k in &[0.0, 1.0, 0.4] {
                for &u in &[0.01, 0.2, 0.5, 0.93] {
                    let num = (pair_value(u + h, k, alpha) - pair_value(u - h, k, alpha)) / (2.0 * h);
                    let ana = fidi_pair_grad(u, k, alpha).unwrap();
                    assert!((num - ana).abs() < 1e-6 * (1.0 + ana.abs()), "{u} {k} {alpha}");
                }
            }
        }
    }

    #[test]
    fn perfect_embedding_is_near_zero() {
        // Same identity coincides, different identities are far apart.
        let e = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![200.0, 0.0], vec![200.0, 0.0]]).unwrap();
        let out = fidi_loss(&e, &[0, 0, 1, 1], &FidiConfig::default()).unwrap();
        assert!(out.value < 1e-9, "{}", out.value);
    }

    #[test]
    fn two_positive_samples_at_half_similarity() {
        let d = 2.0 * std::f64::consts::LN_2; // e^{-0.5 d} = 0.5
        let e = Matrix::from_rows(&[vec![0.0], vec![d]]).unwrap();
        let cfg = FidiConfig {
            reduction: Reduction::Sum,
            ..Default::default()
        };
        let out = fidi_loss(&e, &[3, 3], &cfg).unwrap();
        assert!((out.value - L_HALF_ONE_105).abs() < 1e-6, "{}", out.value);
        assert!(out.meta.positives_only());
    }

    #[test]
    fn hard_pairs_need_pos_and_neg() {
        let e = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let cfg = FidiConfig {
            pair_policy: PairPolicy::HardPairs,
            ..Default::default()
        };
        assert!(matches!(fidi_loss(&e, &[0, 1], &cfg), Err(Error::EmptyPairs(_))));
        let single = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(fidi_loss(&single, &[0], &FidiConfig::default()), Err(Error::EmptyPairs(_))));
    }

    fn random_batch(seed: u64, b: usize, dim: usize, ids: usize) -> (Matrix, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let e = Matrix::from_vec(b, dim, (0..b * dim).map(|_| rng.normal()).collect()).unwrap();
        (e, (0..b).map(|i| i % ids).collect())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (e, labels) = random_batch(21, 16, 8, 4);
        for policy in [PairPolicy::AllPairs, PairPolicy::HardPairs] {
            for map in [ProbMap::Exponential { beta: 0.5 }, ProbMap::Sigmoid { beta: 0.5 }] {
                for distance in [DistanceKind::default(), DistanceKind::squared()] {
                    let cfg = FidiConfig {
                        pair_policy: policy,
                        prob_map: map,
                        distance,
                        ..Default::default()
                    };
                    let out = fidi_loss(&e, &labels, &cfg).unwrap();
                    let num = finite_diff_grad(|m| Ok(fidi_loss(m, &labels, &cfg)?.value), &e, DEFAULT_STEP).unwrap();
                    let err = relative_error(&out.grad_embeddings, &num);
                    assert!(err < 1e-5, "{policy:?} {map:?} {distance:?}: {err}");
                }
            }
        }
    }
}
