use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRecord {
    pub iter: usize,
    pub metric_loss: f64,
    pub cls_loss: f64,
    pub total: f64,
}

/// One record per training iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Trailing moving average of the metric loss over `window` iterations.
    pub fn smoothed_metric(&self, window: usize) -> Vec<f64> {
        moving_average(&self.records.iter().map(|r| r.metric_loss).collect::<Vec<_>>(), window)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("iter,metric_loss,cls_loss,total\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.iter, r.metric_loss, r.cls_loss, r.total).unwrap();
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "iter,metric_loss,cls_loss,total" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header iter,metric_loss,cls_loss,total".into(),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 {
                return Err(bad("expected 4 cells"));
            }
            let f = |k: usize| cells[k].trim().parse::<f64>().map_err(|_| bad("not a number"));
            records.push(HistoryRecord {
                iter: cells[0].trim().parse().map_err(|_| bad("bad iteration"))?,
                metric_loss: f(1)?,
                cls_loss: f(2)?,
                total: f(3)?,
            });
        }
        Ok(TrainHistory { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}
