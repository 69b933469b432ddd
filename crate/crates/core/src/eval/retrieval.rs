use crate::error::{Error, Result};
use crate::geometry::{cross_distances, DistanceKind};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalProtocol {
    /// Drop gallery entries that share both identity and camera with the
    /// query.
    pub exclude_same_camera: bool,
    /// Ranks reported in the CMC curve; ascending, non-empty.
    pub cmc_ranks: Vec<usize>,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            exclude_same_camera: true,
            cmc_ranks: vec![1, 5, 10, 20],
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.cmc_ranks.is_empty() {
            return Err(Error::config("cmc_ranks must not be empty"));
        }
        if self.cmc_ranks[0] < 1 || self.cmc_ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("cmc_ranks must be >= 1 and strictly ascending"));
        }
        Ok(())
    }
}

/// Gallery indices per query, nearest first; equal distances keep gallery
/// order.
pub fn rank_gallery(q: &Matrix, g: &Matrix, kind: DistanceKind) -> Result<Vec<Vec<usize>>> {
    if g.rows() == 0 {
        return Err(Error::Domain("empty gallery".into()));
    }
    let d = cross_distances(q, g, kind)?;
    Ok((0..q.rows())
        .map(|i| {
            let row = d.row(i);
            let mut idx: Vec<usize> = (0..g.rows()).collect();
            idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            idx
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalScores {
    /// `(rank, fraction of valid queries matched within rank)`.
    pub cmc: Vec<(usize, f64)>,
    pub map: f64,
    pub valid_queries: usize,
    /// Queries without any relevant gallery entry after filtering.
    pub excluded_queries: usize,
}

impl RetrievalScores {
    pub fn cmc_at(&self, rank: usize) -> Option<f64> {
        self.cmc.iter().find(|(r, _)| *r == rank).map(|(_, v)| *v)
    }
}

/// Relevance flags of one query's ranking after protocol filtering.
pub(crate) fn relevance(
    ranking: &[usize],
    q_label: usize,
    q_cam: usize,
    g_labels: &[usize],
    g_cams: &[usize],
    exclude_same_camera: bool,
) -> Vec<bool> {
    ranking
        .iter()
        .filter(|&&g| !(exclude_same_camera && g_labels[g] == q_label && g_cams[g] == q_cam))
        .map(|&g| g_labels[g] == q_label)
        .collect()
}

/// Average precision of a relevance list: mean of precision at the rank of
/// each relevant item. `None` when nothing is relevant.
pub fn average_precision(rel: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &r) in rel.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

pub fn cmc_and_map(
    rankings: &[Vec<usize>],
    q_labels: &[usize],
    g_labels: &[usize],
    q_cams: &[usize],
    g_cams: &[usize],
    protocol: &EvalProtocol,
) -> Result<RetrievalScores> {
    protocol.validate()?;
    if rankings.len() != q_labels.len() || q_labels.len() != q_cams.len() || g_labels.len() != g_cams.len() {
        return Err(Error::Shape {
            op: "cmc_and_map",
            left: (rankings.len(), q_labels.len()),
            right: (g_labels.len(), g_cams.len()),
        });
    }
    let mut first_hit_counts = vec![0usize; protocol.cmc_ranks.len()];
    let mut ap_sum = 0.0;
    let mut valid = 0usize;
    for (qi, ranking) in rankings.iter().enumerate() {
        let rel = relevance(ranking, q_labels[qi], q_cams[qi], g_labels, g_cams, protocol.exclude_same_camera);
        let Some(ap) = average_precision(&rel) else { continue };
        valid += 1;
        ap_sum += ap;
        let first = rel.iter().position(|&r| r).expect("ap implies a hit");
        for (slot, &rank) in protocol.cmc_ranks.iter().enumerate() {
            if first < rank {
                first_hit_counts[slot] += 1;
            }
        }
    }
    let denom = valid.max(1) as f64;
    Ok(RetrievalScores {
        cmc: protocol
            .cmc_ranks
            .iter()
            .zip(&first_hit_counts)
            .map(|(&r, &c)| (r, c as f64 / denom))
            .collect(),
        map: ap_sum / denom,
        valid_queries: valid,
        excluded_queries: rankings.len() - valid,
    })
}
