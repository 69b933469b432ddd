//! Metric-learning laboratory built around the fine-grained
//! difference-aware (FIDI) pairwise loss.
//!
//! The crate contains everything needed to compare FIDI against triplet and
//! contrastive losses at desk scale: dense numerics with a finite-difference
//! oracle, synthetic identity data with PK batch sampling, the losses with
//! analytic gradients, a small MLP embedding network with a batch-norm neck
//! and bias-free classifier, a training loop, and ReID-style evaluation
//! (CMC, mAP, Error-I/II fidelity counts).

pub mod checks;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
pub use numerics::Matrix;
