//! Plain-text model checkpoints.
//!
//! ```text
//! fidi-lab-checkpoint 1
//! dims 8 16 4
//! classes 3
//! bn 1 0.9 0.00001          # flag, momentum, eps (flag 0 omits the bn.* blocks)
//! layer0.weight 8 16 v v v ...
//! layer0.bias 1 16 v ...
//! ...
//! bn.scale 1 4 ...
//! bn.shift 1 4 ...
//! bn.running_mean 1 4 ...
//! bn.running_var 1 4 ...
//! classifier 4 3 ...
//! ```
//!
//! Each block line is `name rows cols` followed by `rows·cols` row-major
//! values in shortest round-trip notation, so loading is bit exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BatchNorm, Linear, MlpModel};
use crate::numerics::Matrix;

const MAGIC: &str = "fidi-lab-checkpoint 1";

fn block(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    write!(out, "{name} {rows} {cols}").unwrap();
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

pub fn to_checkpoint_string(m: &MlpModel) -> String {
    let mut out = format!("{MAGIC}\n");
    let dims: Vec<String> = m.dims().iter().map(usize::to_string).collect();
    writeln!(out, "dims {}", dims.join(" ")).unwrap();
    writeln!(out, "classes {}", m.classes()).unwrap();
    match &m.bn {
        Some(bn) => writeln!(out, "bn 1 {} {}", bn.momentum, bn.eps).unwrap(),
        None => writeln!(out, "bn 0").unwrap(),
    }
    for (l, layer) in m.layers.iter().enumerate() {
        let (r, c) = layer.weight.shape();
        block(&mut out, &format!("layer{l}.weight"), r, c, layer.weight.as_slice());
        block(&mut out, &format!("layer{l}.bias"), 1, c, &layer.bias);
    }
    if let Some(bn) = &m.bn {
        let d = bn.dim();
        block(&mut out, "bn.scale", 1, d, &bn.scale);
        block(&mut out, "bn.shift", 1, d, &bn.shift);
        block(&mut out, "bn.running_mean", 1, d, &bn.running_mean);
        block(&mut out, "bn.running_var", 1, d, &bn.running_var);
    }
    let (r, c) = m.classifier.shape();
    block(&mut out, "classifier", r, c, m.classifier.as_slice());
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (i, l) in self.iter.by_ref() {
            if !l.trim().is_empty() {
                return Ok((i + 1, l.split_whitespace().collect()));
            }
        }
        Err(Error::Parse {
            line: 0,
            msg: "unexpected end of checkpoint".into(),
        })
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (line, toks) = self.next()?;
        if toks.first() != Some(&key) {
            return Err(Error::Parse {
                line,
                msg: format!("expected \"{key}\", found \"{}\"", toks.first().unwrap_or(&"")),
            });
        }
        Ok((line, toks[1..].to_vec()))
    }

    fn block(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let (line, toks) = self.keyed(name)?;
        let shape: Vec<usize> = toks.iter().take(2).filter_map(|t| t.parse().ok()).collect();
        if shape != [rows, cols] {
            return Err(Error::Parse {
                line,
                msg: format!("{name}: expected shape {rows}x{cols}"),
            });
        }
        let values: Vec<f64> = toks[2..]
            .iter()
            .map(|t| num(t, line))
            .collect::<Result<_>>()?;
        if values.len() != rows * cols {
            return Err(Error::Parse {
                line,
                msg: format!("{name}: expected {} values, found {}", rows * cols, values.len()),
            });
        }
        Ok(values)
    }
}

fn num<T: std::str::FromStr>(t: &str, line: usize) -> Result<T> {
    t.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad number \"{t}\""),
    })
}

pub fn parse_checkpoint(text: &str) -> Result<MlpModel> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
    };
    let (line, magic) = lines.next()?;
    if magic.join(" ") != MAGIC {
        return Err(Error::Parse {
            line,
            msg: "not a fidi-lab checkpoint".into(),
        });
    }
    let (line, dims) = lines.keyed("dims")?;
    let dims: Vec<usize> = dims.iter().map(|t| num(t, line)).collect::<Result<_>>()?;
    if dims.len() < 2 {
        return Err(Error::Parse {
            line,
            msg: "dims needs at least two widths".into(),
        });
    }
    let (line, classes) = lines.keyed("classes")?;
    let classes: usize = num(classes.first().copied().unwrap_or(""), line)?;
    let (line, bn) = lines.keyed("bn")?;
    let bn_params = match bn.first().copied() {
        Some("1") if bn.len() == 3 => Some((num::<f64>(bn[1], line)?, num::<f64>(bn[2], line)?)),
        Some("0") => None,
        _ => {
            return Err(Error::Parse {
                line,
                msg: "bn line must be \"bn 0\" or \"bn 1 <momentum> <eps>\"".into(),
            })
        }
    };

    let mut layers = Vec::new();
    for (l, w) in dims.windows(2).enumerate() {
        let weight = lines.block(&format!("layer{l}.weight"), w[0], w[1])?;
        let bias = lines.block(&format!("layer{l}.bias"), 1, w[1])?;
        layers.push(Linear {
            weight: Matrix::from_vec(w[0], w[1], weight)?,
            bias,
        });
    }
    let d = *dims.last().unwrap();
    let bn = match bn_params {
        Some((momentum, eps)) => Some(BatchNorm {
            scale: lines.block("bn.scale", 1, d)?,
            shift: lines.block("bn.shift", 1, d)?,
            running_mean: lines.block("bn.running_mean", 1, d)?,
            running_var: lines.block("bn.running_var", 1, d)?,
            momentum,
            eps,
        }),
        None => None,
    };
    let classifier = Matrix::from_vec(d, classes, lines.block("classifier", d, classes)?)?;
    let model = MlpModel {
        layers,
        bn,
        classifier,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_checkpoint(m: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_checkpoint_string(m)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use crate::numerics::Rng;

    #[test]
    fn round_trip_exact() {
        for use_bn in [true, false] {
            let mut m = MlpModel::init(&[5, 7, 3], 4, use_bn, &mut Rng::new(3)).unwrap();
            let x = Matrix::filled(4, 5, 0.3);
            m.forward(&x, Mode::Train).unwrap();
            let back = parse_checkpoint(&to_checkpoint_string(&m)).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let m = MlpModel::init(&[2, 2], 2, true, &mut Rng::new(0)).unwrap();
        let text = to_checkpoint_string(&m);
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_checkpoint(&cut), Err(Error::Parse { .. })));
        assert!(parse_checkpoint("hello\n").is_err());
    }
}
