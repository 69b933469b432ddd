use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Labeled feature vectors: one row per sample, with identity and camera
/// labels.
///
/// Identity labels are stored densely as `0..C`. The label each dense id was
/// built from is kept in `source_ids` (sorted ascending), so splits can be
/// checked for identity disjointness after re-densification.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    features: Matrix,
    identity: Vec<usize>,
    camera: Vec<usize>,
    source_ids: Vec<usize>,
}

impl SampleSet {
    /// Builds a sample set from raw (possibly sparse) identity labels.
    pub fn new(features: Matrix, identity: Vec<usize>, camera: Vec<usize>) -> Result<Self> {
        let n = features.rows();
        if identity.len() != n || camera.len() != n {
            return Err(Error::Shape {
                op: "SampleSet::new",
                left: (n, features.cols()),
                right: (identity.len(), camera.len()),
            });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("sample features".into()));
        }
        let mut remap = BTreeMap::new();
        for &id in &identity {
            remap.entry(id).or_insert(0usize);
        }
        for (dense, v) in remap.values_mut().enumerate() {
            *v = dense;
        }
        let source_ids: Vec<usize> = remap.keys().copied().collect();
        let identity = identity.iter().map(|id| remap[id]).collect();
        Ok(SampleSet {
            features,
            identity,
            camera,
            source_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.identity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identity.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_identities(&self) -> usize {
        self.source_ids.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn identity(&self) -> &[usize] {
        &self.identity
    }

    pub fn camera(&self) -> &[usize] {
        &self.camera
    }

    /// Original label of each dense identity.
    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    /// Sample indices grouped by dense identity.
    pub fn indices_by_identity(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_identities()];
        for (i, &id) in self.identity.iter().enumerate() {
            groups[id].push(i);
        }
        groups
    }

    /// Subset made of the given rows; labels are re-densified and
    /// `source_ids` keep pointing at this set's original labels.
    pub fn subset(&self, rows: &[usize]) -> SampleSet {
        let features = self.features.select_rows(rows);
        let identity: Vec<usize> = rows
            .iter()
            .map(|&r| self.source_ids[self.identity[r]])
            .collect();
        let camera = rows.iter().map(|&r| self.camera[r]).collect();
        SampleSet::new(features, identity, camera).expect("subset of a valid set is valid")
    }

    /// Keeps every sample whose dense identity satisfies `keep`.
    pub fn filter_identities(&self, keep: impl Fn(usize) -> bool) -> SampleSet {
        let rows: Vec<usize> = (0..self.len()).filter(|&r| keep(self.identity[r])).collect();
        self.subset(&rows)
    }
}
