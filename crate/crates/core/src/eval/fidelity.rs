//! Error-I / Error-II counts and intra/inter distance summaries.
//!
//! For an anchor `a` with farthest positive at distance `P` and nearest
//! negative at distance `N`:
//!
//! * Error-I(a)  = number of negatives strictly closer than `P`;
//! * Error-II(a) = number of positives strictly farther than `N`.
//!
//! Reported values are means over anchors. Anchors whose identity has a
//! single sample have no positive and are left out.

use crate::error::{Error, Result};
use crate::geometry::{pairwise_distances, DistanceKind};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityStats {
    pub error_i: f64,
    pub error_ii: f64,
    pub anchors: usize,
    /// Samples not used as anchors because their identity has one sample.
    pub excluded: usize,
}

fn check(features: &Matrix, labels: &[usize]) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::Shape {
            op: "fidelity labels",
            left: features.shape(),
            right: (labels.len(), 1),
        });
    }
    Ok(())
}

pub fn error_stats(features: &Matrix, labels: &[usize], kind: DistanceKind) -> Result<FidelityStats> {
    check(features, labels)?;
    let d = pairwise_distances(features, kind)?;
    let n = labels.len();
    let (mut sum_i, mut sum_ii, mut anchors) = (0usize, 0usize, 0usize);
    for a in 0..n {
        let row = d.row(a);
        let mut max_pos = f64::NEG_INFINITY;
        let mut min_neg = f64::INFINITY;
        for j in 0..n {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                max_pos = max_pos.max(row[j]);
            } else {
                min_neg = min_neg.min(row[j]);
            }
        }
        if max_pos == f64::NEG_INFINITY {
            continue;
        }
        anchors += 1;
        for j in 0..n {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                sum_ii += usize::from(row[j] > min_neg);
            } else {
                sum_i += usize::from(row[j] < max_pos);
            }
        }
    }
    if anchors == 0 {
        return Err(Error::Domain("no identity has two or more samples".into()));
    }
    Ok(FidelityStats {
        error_i: sum_i as f64 / anchors as f64,
        error_ii: sum_ii as f64 / anchors as f64,
        anchors,
        excluded: n - anchors,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &v in values {
            let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceSummary {
    /// Mean distance from each anchor to its positives / negatives.
    pub anchor_intra: Vec<f64>,
    pub anchor_inter: Vec<f64>,
    /// Per identity (dense label), mean of its anchors' values.
    pub class_intra: Vec<f64>,
    pub class_inter: Vec<f64>,
    /// Both histograms share the same edges.
    pub intra_hist: Histogram,
    pub inter_hist: Histogram,
}

impl DistanceSummary {
    pub fn mean_intra(&self) -> f64 {
        mean(&self.anchor_intra)
    }

    pub fn mean_inter(&self) -> f64 {
        mean(&self.anchor_inter)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per-anchor mean intra- and inter-identity distances and their
/// histograms. Anchors need at least one positive and one negative.
pub fn distance_summary(features: &Matrix, labels: &[usize], bins: usize, kind: DistanceKind) -> Result<DistanceSummary> {
    check(features, labels)?;
    if bins < 1 {
        return Err(Error::config("bins must be >= 1"));
    }
    let d = pairwise_distances(features, kind)?;
    let n = labels.len();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut anchor_intra = Vec::new();
    let mut anchor_inter = Vec::new();
    let mut class_acc = vec![(0.0, 0.0, 0usize); classes];
    for a in 0..n {
        let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
        for j in 0..n {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                si += d[(a, j)];
                ni += 1;
            } else {
                so += d[(a, j)];
                no += 1;
            }
        }
        if ni == 0 || no == 0 {
            continue;
        }
        let (intra, inter) = (si / ni as f64, so / no as f64);
        anchor_intra.push(intra);
        anchor_inter.push(inter);
        let c = &mut class_acc[labels[a]];
        c.0 += intra;
        c.1 += inter;
        c.2 += 1;
    }
    if anchor_intra.is_empty() {
        return Err(Error::Domain("no anchor has both a positive and a negative".into()));
    }
    let lo = 0.0;
    let hi = anchor_intra.iter().chain(&anchor_inter).fold(0.0f64, |m, &v| m.max(v));
    let per_class = |pick: fn(&(f64, f64, usize)) -> f64| {
        class_acc
            .iter()
            .map(|c| if c.2 == 0 { 0.0 } else { pick(c) / c.2 as f64 })
            .collect()
    };
    Ok(DistanceSummary {
        class_intra: per_class(|c| c.0),
        class_inter: per_class(|c| c.1),
        intra_hist: Histogram::build(&anchor_intra, lo, hi, bins),
        inter_hist: Histogram::build(&anchor_inter, lo, hi, bins),
        anchor_intra,
        anchor_inter,
    })
}
