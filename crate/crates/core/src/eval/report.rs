//! Report files: `report.txt` (one `key=value` per line), `cmc.csv`
//! (`rank,cmc`), and `distances.csv` (`bin_lo,bin_hi,intra,inter` counts).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::DistanceSummary;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub cmc: Vec<(usize, f64)>,
    pub error_i: f64,
    pub error_ii: f64,
    pub queries: usize,
    pub gallery: usize,
    pub valid_queries: usize,
    pub excluded_queries: usize,
    pub excluded_anchors: usize,
    pub distances: DistanceSummary,
}

impl EvalReport {
    pub fn cmc_at(&self, rank: usize) -> Option<f64> {
        self.cmc.iter().find(|(r, _)| *r == rank).map(|(_, v)| *v)
    }

    pub fn key_values(&self) -> String {
        let mut out = String::new();
        writeln!(out, "mAP={}", self.map).unwrap();
        for (r, v) in &self.cmc {
            writeln!(out, "cmc_{r}={v}").unwrap();
        }
        writeln!(out, "error_I={}", self.error_i).unwrap();
        writeln!(out, "error_II={}", self.error_ii).unwrap();
        writeln!(out, "mean_intra={}", self.distances.mean_intra()).unwrap();
        writeln!(out, "mean_inter={}", self.distances.mean_inter()).unwrap();
        writeln!(out, "queries={}", self.queries).unwrap();
        writeln!(out, "gallery={}", self.gallery).unwrap();
        writeln!(out, "valid_queries={}", self.valid_queries).unwrap();
        writeln!(out, "excluded_queries={}", self.excluded_queries).unwrap();
        writeln!(out, "excluded_anchors={}", self.excluded_anchors).unwrap();
        out
    }

    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank,cmc\n");
        for (r, v) in &self.cmc {
            writeln!(out, "{r},{v}").unwrap();
        }
        out
    }

    pub fn distances_csv(&self) -> String {
        let d = &self.distances;
        let mut out = String::from("bin_lo,bin_hi,intra,inter\n");
        for b in 0..d.intra_hist.counts.len() {
            writeln!(
                out,
                "{},{},{},{}",
                d.intra_hist.edges[b],
                d.intra_hist.edges[b + 1],
                d.intra_hist.counts[b],
                d.inter_hist.counts[b]
            )
            .unwrap();
        }
        out
    }

    /// Writes `report.txt`, `cmc.csv` and `distances.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.txt", self.key_values()),
            ("cmc.csv", self.cmc_csv()),
            ("distances.csv", self.distances_csv()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Parses a `key=value` report into numbers.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected key=value".into(),
        })?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("value of {k} is not a number"),
        })?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

pub fn parse_cmc_csv(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some("rank,cmc") {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header rank,cmc".into(),
        });
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || Error::Parse {
                line: i + 1,
                msg: format!("bad row \"{l}\""),
            };
            let (r, v) = l.split_once(',').ok_or_else(bad)?;
            Ok((r.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}
