use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Default identities per batch.
pub const DEFAULT_P: usize = 8;
/// Default instances per identity (batch of 128 with `P = 8`).
pub const DEFAULT_K: usize = 16;

/// Identity-balanced batch: `p` identities, each appearing exactly `k`
/// times, laid out identity-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub p: usize,
    pub k: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// PK sampling. Identities are drawn without replacement; within an
/// identity, `k` instances are drawn without replacement when it has at
/// least `k` samples and with replacement otherwise.
pub fn pk_sample(s: &SampleSet, p: usize, k: usize, mut rng: Rng) -> Result<(Batch, Rng)> {
    let groups = s.indices_by_identity();
    pk_sample_grouped(&groups, p, k, &mut rng).map(|b| (b, rng))
}

/// Same as [`pk_sample`] with precomputed per-identity groups.
pub fn pk_sample_grouped(groups: &[Vec<usize>], p: usize, k: usize, rng: &mut Rng) -> Result<Batch> {
    if p == 0 || k == 0 {
        return Err(Error::Sampling("P and K must be >= 1".into()));
    }
    if p > groups.len() {
        return Err(Error::Sampling(format!(
            "P = {p} exceeds the {} identities available",
            groups.len()
        )));
    }
    let mut ids: Vec<usize> = (0..groups.len()).collect();
    partial_shuffle(&mut ids, p, rng);
    let mut indices = Vec::with_capacity(p * k);
    for &id in &ids[..p] {
        let members = &groups[id];
        if members.len() >= k {
            let mut pool = members.clone();
            partial_shuffle(&mut pool, k, rng);
            indices.extend_from_slice(&pool[..k]);
        } else {
            indices.extend((0..k).map(|_| members[rng.below(members.len())]));
        }
    }
    Ok(Batch { indices, p, k })
}

/// Moves a uniform random `m`-subset, in uniform random order, to the
/// front of `v`.
fn partial_shuffle(v: &mut [usize], m: usize, rng: &mut Rng) {
    for i in 0..m.min(v.len()) {
        let j = i + rng.below(v.len() - i);
        v.swap(i, j);
    }
}
