//! Pairwise distances and distance-to-probability maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Lower clamp applied to similarity probabilities before they enter a log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    SquaredEuclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceKind {
    pub metric: Metric,
    /// Added under the square root for the Euclidean metric.
    pub eps: f64,
}

impl Default for DistanceKind {
    fn default() -> Self {
        DistanceKind {
            metric: Metric::Euclidean,
            eps: 1e-12,
        }
    }
}

impl DistanceKind {
    pub fn squared() -> Self {
        DistanceKind {
            metric: Metric::SquaredEuclidean,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::config("distance eps must be > 0"));
        }
        Ok(())
    }

    /// Distance from a squared Euclidean norm.
    #[inline]
    pub fn from_sq(&self, sq: f64) -> f64 {
        match self.metric {
            Metric::Euclidean => (sq + self.eps).sqrt() - self.eps.sqrt(),
            Metric::SquaredEuclidean => sq,
        }
    }

    /// `∂d/∂z_i = scale · (z_i − z_j)`; returns `scale`.
    #[inline]
    fn diff_scale(&self, sq: f64) -> f64 {
        match self.metric {
            Metric::Euclidean => 1.0 / (sq + self.eps).sqrt(),
            Metric::SquaredEuclidean => 2.0,
        }
    }

    pub fn between(&self, a: &[f64], b: &[f64]) -> f64 {
        self.from_sq(sq_dist(a, b))
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `B×B` distances between the rows of `e`. The Euclidean variant is
/// `sqrt(‖z_i − z_j‖² + ε) − sqrt(ε)`: exactly zero on the diagonal and
/// differentiable everywhere.
pub fn pairwise_distances(e: &Matrix, kind: DistanceKind) -> Result<Matrix> {
    kind.validate()?;
    if e.rows() < 1 {
        return Err(Error::Domain("pairwise_distances needs at least one row".into()));
    }
    if !e.is_finite() {
        return Err(Error::NonFinite("embeddings".into()));
    }
    let b = e.rows();
    let mut d = Matrix::zeros(b, b);
    for i in 0..b {
        for j in i + 1..b {
            let v = kind.from_sq(sq_dist(e.row(i), e.row(j)));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Distances from every row of `q` to every row of `g`.
pub fn cross_distances(q: &Matrix, g: &Matrix, kind: DistanceKind) -> Result<Matrix> {
    kind.validate()?;
    if q.cols() != g.cols() {
        return Err(Error::Shape {
            op: "cross_distances",
            left: q.shape(),
            right: g.shape(),
        });
    }
    let mut d = Matrix::zeros(q.rows(), g.rows());
    for i in 0..q.rows() {
        for j in 0..g.rows() {
            d[(i, j)] = kind.from_sq(sq_dist(q.row(i), g.row(j)));
        }
    }
    Ok(d)
}

/// Chains `∂L/∂d_ij` (entries of `upstream`, any `i ≠ j`) back to the
/// embedding rows. `upstream` need not be symmetric; `d_ij` and `d_ji` are
/// the same quantity, so both entries contribute.
pub fn distance_backward(e: &Matrix, upstream: &Matrix, kind: DistanceKind) -> Result<Matrix> {
    let b = e.rows();
    if upstream.shape() != (b, b) {
        return Err(Error::Shape {
            op: "distance_backward",
            left: e.shape(),
            right: upstream.shape(),
        });
    }
    let dim = e.cols();
    let mut grad = Matrix::zeros(b, dim);
    for i in 0..b {
        for j in i + 1..b {
            let g = upstream[(i, j)] + upstream[(j, i)];
            if g == 0.0 {
                continue;
            }
            let (zi, zj) = (e.row(i), e.row(j));
            let s = g * kind.diff_scale(sq_dist(zi, zj));
            for k in 0..dim {
                let delta = s * (zi[k] - zj[k]);
                grad[(i, k)] += delta;
                grad[(j, k)] -= delta;
            }
        }
    }
    Ok(grad)
}

/// Maps a distance to a similarity probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProbMap {
    /// `u = exp(−β d)`.
    Exponential { beta: f64 },
    /// `u = 1 / (1 + exp(β d))`, decreasing in `d` and equal to 1/2 at 0.
    Sigmoid { beta: f64 },
}

impl Default for ProbMap {
    fn default() -> Self {
        ProbMap::Exponential { beta: 0.5 }
    }
}

impl ProbMap {
    pub fn beta(&self) -> f64 {
        match *self {
            ProbMap::Exponential { beta } | ProbMap::Sigmoid { beta } => beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let beta = self.beta();
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::config(format!("beta must be finite and > 0, got {beta}")));
        }
        Ok(())
    }
}

/// Returns `(u, du/dd)`. `u` is clamped to `[PROB_FLOOR, 1]`; where the
/// clamp is active the derivative is 0.
pub fn prob_of_distance(d: f64, map: ProbMap) -> Result<(f64, f64)> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
    }
    let (u, du) = match map {
        ProbMap::Exponential { beta } => {
            let u = (-beta * d).exp();
            (u, -beta * u)
        }
        ProbMap::Sigmoid { beta } => {
            // 1/(1+e^{x}) written as e^{-x}/(1+e^{-x}) to stay finite for large x.
            let x = beta * d;
            let t = (-x).exp();
            let u = t / (1.0 + t);
            (u, -beta * u * (1.0 - u))
        }
    };
    if u < PROB_FLOOR {
        Ok((PROB_FLOOR, 0.0))
    } else {
        Ok((u.min(1.0), du))
    }
}
