//! Dataset CSV.
//!
//! Header `id,cam,f0,f1,...,f{F-1}`, one row per sample, UTF-8, `.` as the
//! decimal separator. Floats are written with Rust's shortest round-trip
//! formatting, so `load(save(s)) == s` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub fn to_csv_string(s: &SampleSet) -> String {
    let f = s.feature_dim();
    let mut out = String::from("id,cam");
    for j in 0..f {
        write!(out, ",f{j}").unwrap();
    }
    out.push('\n');
    for i in 0..s.len() {
        write!(out, "{},{}", s.source_ids()[s.identity()[i]], s.camera()[i]).unwrap();
        for v in s.features().row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<SampleSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "no header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for (pos, name) in ["id", "cam"].iter().enumerate() {
        if cols.get(pos) != Some(name) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing column \"{name}\" at position {pos}"),
            });
        }
    }
    let f = cols.len() - 2;
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column \"f{j}\", found \"{c}\""),
            });
        }
    }

    let mut data = Vec::new();
    let mut identity = Vec::new();
    let mut camera = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != f + 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} cells, found {}", f + 2, cells.len()),
            });
        }
        let label = |k: usize, name: &str| -> Result<usize> {
            cells[k].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("{name} \"{}\" is not a non-negative integer", cells[k]),
            })
        };
        identity.push(label(0, "id")?);
        camera.push(label(1, "cam")?);
        for (j, cell) in cells[2..].iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("f{j} \"{cell}\" is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("f{j} is not finite"),
                });
            }
            data.push(v);
        }
    }
    let n = identity.len();
    SampleSet::new(Matrix::from_vec(n, f, data)?, identity, camera)
}

pub fn save_sampleset(s: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(s)).map_err(|e| Error::io(path, e))
}

pub fn load_sampleset(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    #[test]
    fn round_trip_three_samples() {
        let f = Matrix::from_rows(&[
            vec![0.1, -2.5e-17],
            vec![1.0 / 3.0, 7.0],
            vec![f64::MAX, -0.0],
        ])
        .unwrap();
        let s = SampleSet::new(f, vec![4, 4, 1], vec![0, 2, 1]).unwrap();
        let back = parse_csv(&to_csv_string(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let s = generate_synthetic(&SynthConfig {
            num_identity_pairs: 2,
            samples_per_identity: 3,
            feature_dim: 4,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        save_sampleset(&s, &p).unwrap();
        let back = load_sampleset(&p).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.features()), bits(s.features()));
        assert_eq!(back, s);
    }

    #[test]
    fn missing_id_column() {
        let err = parse_csv("ident,cam,f0\n0,0,1.0\n").unwrap_err();
        assert!(err.to_string().contains("\"id\""), "{err}");
    }

    #[test]
    fn empty_file() {
        let err = parse_csv("").unwrap_err();
        assert!(err.to_string().contains("no header"), "{err}");
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse_csv("id,cam,f0,f1\n0,0,1,2\n1,0,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let err = parse_csv("id,cam,f0\n0,0,1\n0,1,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("abc"));
    }
}
