//! Dense matrices, seeded randomness, and the finite-difference oracle.

pub mod gradcheck;
pub mod matrix;
pub mod rng;

pub use gradcheck::{finite_diff_grad, relative_error, relative_error_slices, DEFAULT_STEP};
pub use matrix::{matmul, matmul_nt, matmul_tn, Matrix};
pub use rng::{shuffle, Rng};
