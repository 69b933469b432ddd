use crate::error::{Error, Result};
use crate::geometry::{distance_backward, pairwise_distances, DistanceKind};
use crate::losses::{check_labels, mine_hardest, LossMeta, LossOutput};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletVariant {
    /// Every valid (anchor, positive, negative) triple / every pair.
    BatchAll,
    /// Farthest positive and nearest negative per anchor.
    BatchHard,
}

/// Margin-based losses: triplet and contrastive.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletConfig {
    pub margin: f64,
    pub variant: TripletVariant,
    pub distance: DistanceKind,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            margin: 0.3,
            variant: TripletVariant::BatchHard,
            distance: DistanceKind::default(),
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(Error::config(format!("margin must be finite and >= 0, got {}", self.margin)));
        }
        self.distance.validate()
    }
}

/// Triplet loss `[d_ap − d_an + m]_+`, dispatched on `cfg.variant`. The
/// batch-all variant averages over every valid triplet, active or not.
pub fn triplet_loss(e: &Matrix, labels: &[usize], cfg: &TripletConfig) -> Result<LossOutput> {
    if cfg.variant == TripletVariant::BatchHard {
        return batch_hard_triplet_loss(e, labels, cfg);
    }
    cfg.validate()?;
    check_labels(e, labels)?;
    let b = e.rows();
    let d = pairwise_distances(e, cfg.distance)?;

    let mut count = 0usize;
    let mut value = 0.0;
    let mut active: Vec<(usize, usize, usize)> = Vec::new();
    for a in 0..b {
        for p in 0..b {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..b {
                if labels[n] == labels[a] {
                    continue;
                }
                count += 1;
                let h = d[(a, p)] - d[(a, n)] + cfg.margin;
                if h > 0.0 {
                    value += h;
                    active.push((a, p, n));
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyPairs("no valid triplet in batch".into()));
    }
    let scale = 1.0 / count as f64;
    let mut upstream = Matrix::zeros(b, b);
    for &(a, p, n) in &active {
        upstream[(a, p)] += scale;
        upstream[(a, n)] -= scale;
    }
    Ok(LossOutput {
        value: value * scale,
        grad_embeddings: distance_backward(e, &upstream, cfg.distance)?,
        grad_logits: None,
        meta: LossMeta {
            terms: count,
            ..Default::default()
        },
    })
}

/// Batch-hard triplet loss: per anchor `[max_p d_ap − min_n d_an + m]_+`,
/// averaged over anchors that have both a positive and a negative.
pub fn batch_hard_triplet_loss(e: &Matrix, labels: &[usize], cfg: &TripletConfig) -> Result<LossOutput> {
    cfg.validate()?;
    check_labels(e, labels)?;
    let b = e.rows();
    let d = pairwise_distances(e, cfg.distance)?;
    let mined = mine_hardest(&d, labels);
    let anchors = mined.iter().flatten().count();
    if anchors == 0 {
        return Err(Error::EmptyPairs("no anchor has both a positive and a negative".into()));
    }
    let scale = 1.0 / anchors as f64;
    let mut value = 0.0;
    let mut upstream = Matrix::zeros(b, b);
    for (a, m) in mined.iter().enumerate() {
        let Some((p, n)) = *m else { continue };
        let h = d[(a, p)] - d[(a, n)] + cfg.margin;
        if h > 0.0 {
            value += h;
            upstream[(a, p)] += scale;
            upstream[(a, n)] -= scale;
        }
    }
    Ok(LossOutput {
        value: value * scale,
        grad_embeddings: distance_backward(e, &upstream, cfg.distance)?,
        grad_logits: None,
        meta: LossMeta {
            terms: anchors,
            skipped_anchors: b - anchors,
            ..Default::default()
        },
    })
}
