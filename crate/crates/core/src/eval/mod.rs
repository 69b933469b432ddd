//! Retrieval metrics, fidelity counts, and evaluation reports.

mod fidelity;
mod report;
mod retrieval;

pub use fidelity::{distance_summary, error_stats, DistanceSummary, FidelityStats, Histogram};
pub use report::{parse_cmc_csv, parse_key_values, EvalReport};
pub use retrieval::{average_precision, cmc_and_map, rank_gallery, EvalProtocol, RetrievalScores};

use std::collections::BTreeSet;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::geometry::DistanceKind;
use crate::model::MlpModel;
use crate::numerics::Matrix;

pub const DEFAULT_BINS: usize = 20;

/// Query/gallery split: the first sample of every (identity, camera)
/// combination is a query, everything else is gallery.
pub fn query_gallery_split(s: &SampleSet) -> (Vec<usize>, Vec<usize>) {
    let mut seen = BTreeSet::new();
    let (mut q, mut g) = (Vec::new(), Vec::new());
    for i in 0..s.len() {
        if seen.insert((s.identity()[i], s.camera()[i])) {
            q.push(i);
        } else {
            g.push(i);
        }
    }
    (q, g)
}

/// Evaluates arbitrary features of a sample set (one row per sample).
pub fn evaluate_features(
    features: &Matrix,
    s: &SampleSet,
    protocol: &EvalProtocol,
    bins: usize,
    kind: DistanceKind,
) -> Result<EvalReport> {
    if features.rows() != s.len() {
        return Err(Error::Shape {
            op: "evaluate_features",
            left: features.shape(),
            right: (s.len(), s.feature_dim()),
        });
    }
    let (qi, gi) = query_gallery_split(s);
    let q = features.select_rows(&qi);
    let g = features.select_rows(&gi);
    let rankings = rank_gallery(&q, &g, kind)?;
    let pick = |idx: &[usize], v: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let scores = cmc_and_map(
        &rankings,
        &pick(&qi, s.identity()),
        &pick(&gi, s.identity()),
        &pick(&qi, s.camera()),
        &pick(&gi, s.camera()),
        protocol,
    )?;
    let fidelity = error_stats(features, s.identity(), kind)?;
    let distances = distance_summary(features, s.identity(), bins, kind)?;
    Ok(EvalReport {
        map: scores.map,
        cmc: scores.cmc,
        error_i: fidelity.error_i,
        error_ii: fidelity.error_ii,
        queries: qi.len(),
        gallery: gi.len(),
        valid_queries: scores.valid_queries,
        excluded_queries: scores.excluded_queries,
        excluded_anchors: fidelity.excluded,
        distances,
    })
}

/// Embeds `s` with the model in eval mode and evaluates the pre-neck
/// embeddings.
pub fn evaluate_model(model: &MlpModel, s: &SampleSet, protocol: &EvalProtocol, bins: usize) -> Result<EvalReport> {
    if s.feature_dim() != model.input_dim() {
        return Err(Error::config(format!(
            "dataset has {} features per sample, model expects F = {}",
            s.feature_dim(),
            model.input_dim()
        )));
    }
    let emb = model.embed(s.features())?;
    evaluate_features(&emb, s, protocol, bins, DistanceKind::default())
}
