//! Metric and classification losses with analytic gradients.
//!
//! Every pairwise loss here goes through the same path: distances between
//! embedding rows, a per-pair upstream gradient `∂L/∂d_ij`, and
//! [`distance_backward`](crate::geometry::distance_backward) to reach the
//! embeddings.

mod contrastive;
mod cross_entropy;
mod curve;
mod fidi;
mod triplet;

pub use contrastive::contrastive_loss;
pub use cross_entropy::cross_entropy_loss;
pub use curve::{curve_csv, loss_curve, CurvePoint};
pub use fidi::{fidi_bound, fidi_loss, fidi_pair_grad, fidi_pair_loss, FidiConfig, PairPolicy, Reduction};
pub use triplet::{batch_hard_triplet_loss, triplet_loss, TripletConfig, TripletVariant};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Counts describing which terms a loss evaluation used.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LossMeta {
    /// Number of pair/triplet/anchor terms the value was reduced over.
    pub terms: usize,
    pub positive_terms: usize,
    pub negative_terms: usize,
    /// Anchors dropped by mining because they had no positive or negative.
    pub skipped_anchors: usize,
}

impl LossMeta {
    /// True when a pair loss saw only same-identity pairs (a batch with a
    /// single identity).
    pub fn positives_only(&self) -> bool {
        self.positive_terms > 0 && self.negative_terms == 0
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub value: f64,
    /// `B×D`; zeros for losses that do not read embeddings.
    pub grad_embeddings: Matrix,
    /// `B×C`; only set by the classification loss.
    pub grad_logits: Option<Matrix>,
    pub meta: LossMeta,
}

/// Which metric loss drives training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Fidi,
    /// Batch-hard triplet.
    Btl,
    /// Batch-all triplet.
    Tl,
    /// Batch-hard contrastive.
    Bcl,
    /// All-pairs contrastive.
    Cl,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [LossKind::Fidi, LossKind::Tl, LossKind::Btl, LossKind::Cl, LossKind::Bcl];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Fidi => "fidi",
            LossKind::Btl => "btl",
            LossKind::Tl => "tl",
            LossKind::Bcl => "bcl",
            LossKind::Cl => "cl",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown loss kind \"{s}\"")))
    }
}

/// A configured metric loss, ready to evaluate on embeddings.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricLoss {
    Fidi(FidiConfig),
    Triplet(TripletConfig),
    Contrastive(TripletConfig),
}

impl MetricLoss {
    pub fn new(kind: LossKind, fidi: &FidiConfig, margin: &TripletConfig) -> Self {
        let with = |variant| TripletConfig {
            variant,
            ..margin.clone()
        };
        match kind {
            LossKind::Fidi => MetricLoss::Fidi(fidi.clone()),
            LossKind::Tl => MetricLoss::Triplet(with(TripletVariant::BatchAll)),
            LossKind::Btl => MetricLoss::Triplet(with(TripletVariant::BatchHard)),
            LossKind::Cl => MetricLoss::Contrastive(with(TripletVariant::BatchAll)),
            LossKind::Bcl => MetricLoss::Contrastive(with(TripletVariant::BatchHard)),
        }
    }

    pub fn compute(&self, e: &Matrix, labels: &[usize]) -> Result<LossOutput> {
        match self {
            MetricLoss::Fidi(cfg) => fidi_loss(e, labels, cfg),
            MetricLoss::Triplet(cfg) => triplet_loss(e, labels, cfg),
            MetricLoss::Contrastive(cfg) => contrastive_loss(e, labels, cfg),
        }
    }
}

pub(crate) fn check_labels(e: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != e.rows() {
        return Err(Error::Shape {
            op: "loss labels",
            left: e.shape(),
            right: (labels.len(), 1),
        });
    }
    Ok(())
}

/// Per anchor: index of the farthest positive and of the nearest negative.
/// Ties go to the lowest index. `None` when the anchor lacks either.
pub(crate) fn mine_hardest(d: &Matrix, labels: &[usize]) -> Vec<Option<(usize, usize)>> {
    let b = labels.len();
    (0..b)
        .map(|a| {
            let mut pos: Option<usize> = None;
            let mut neg: Option<usize> = None;
            for j in 0..b {
                if j == a {
                    continue;
                }
                if labels[j] == labels[a] {
                    if pos.map_or(true, |p| d[(a, j)] > d[(a, p)]) {
                        pos = Some(j);
                    }
                } else if neg.map_or(true, |n| d[(a, j)] < d[(a, n)]) {
                    neg = Some(j);
                }
            }
            pos.zip(neg)
        })
        .collect()
}
