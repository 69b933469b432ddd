use std::fmt::Write;

use crate::error::{Error, Result};
use crate::geometry::{prob_of_distance, ProbMap};
use crate::losses::fidi_pair_loss;

/// Per-pair losses at one distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub d: f64,
    /// Exponential map, different identities.
    pub fidi_k0: f64,
    /// Exponential map, same identity.
    pub fidi_k1: f64,
    /// Triplet term `[d_ap − d_an + m]_+` with `d_ap = d` and the negative
    /// sitting exactly at the margin, which reduces to `d`.
    pub triplet_equivalent: f64,
    pub sigmoid_k0: f64,
    pub sigmoid_k1: f64,
}

/// Tabulates the per-pair FIDI loss over `steps` evenly spaced distances in
/// `[0, d_max]`.
pub fn loss_curve(alpha: f64, beta: f64, d_max: f64, steps: usize) -> Result<Vec<CurvePoint>> {
    if steps < 2 {
        return Err(Error::config(format!("loss curve needs at least 2 steps, got {steps}")));
    }
    if !(d_max > 0.0) || !d_max.is_finite() {
        return Err(Error::config(format!("d_max must be finite and > 0, got {d_max}")));
    }
    let exp = ProbMap::Exponential { beta };
    let sig = ProbMap::Sigmoid { beta };
    exp.validate()?;
    (0..steps)
        .map(|i| {
            let d = d_max * i as f64 / (steps - 1) as f64;
            let (ue, _) = prob_of_distance(d, exp)?;
            let (us, _) = prob_of_distance(d, sig)?;
            Ok(CurvePoint {
                d,
                fidi_k0: fidi_pair_loss(ue, 0.0, alpha)?,
                fidi_k1: fidi_pair_loss(ue, 1.0, alpha)?,
                triplet_equivalent: d,
                sigmoid_k0: fidi_pair_loss(us, 0.0, alpha)?,
                sigmoid_k1: fidi_pair_loss(us, 1.0, alpha)?,
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("d,fidi_k0,fidi_k1,triplet_equivalent,sigmoid_variant_k0,sigmoid_variant_k1\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.d, p.fidi_k0, p.fidi_k1, p.triplet_equivalent, p.sigmoid_k0, p.sigmoid_k1
        )
        .unwrap();
    }
    out
}
