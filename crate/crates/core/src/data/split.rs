use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Identity-disjoint split keeping `round(keep_fraction · C)` randomly
/// chosen identities with all of their samples. Returns `(kept, removed)`;
/// both are re-densified.
pub fn split_identities(s: &SampleSet, keep_fraction: f64, mut rng: Rng) -> Result<(SampleSet, SampleSet, Rng)> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::config(format!(
            "keep_fraction must be in (0, 1], got {keep_fraction}"
        )));
    }
    let c = s.num_identities();
    let keep = (keep_fraction * c as f64).round() as usize;
    let mut ids: Vec<usize> = (0..c).collect();
    rng.shuffle(&mut ids);
    let mut kept = vec![false; c];
    for &id in &ids[..keep] {
        kept[id] = true;
    }
    let a = s.filter_identities(|id| kept[id]);
    let b = s.filter_identities(|id| !kept[id]);
    Ok((a, b, rng))
}
