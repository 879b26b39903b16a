//! Moment body membership via the maximum-entropy log-partition dual.
//!
//! A moment body is the image of the spectraplex (trace-one positive
//! semidefinite `n x n` matrices) under a linear map
//! `X -> (tr(A_1 X), ..., tr(A_m X))`. Deciding whether a vector `b` lies in
//! it reduces to minimizing the smooth convex function
//!
//! ```text
//! f(y) = log tr exp(sum_i y_i A_i) - b^T y
//! ```
//!
//! whose gradient is `A(exp1(A^T y)) - b`. A vanishing gradient produces a
//! density matrix certifying feasibility; a negative value produces a
//! separating direction certifying infeasibility.
//!
//! The pipeline is:
//!
//! 1. [`precondition`] centers the matrices to be traceless and whitens them
//!    so their Gram matrix is the identity,
//! 2. [`solver`] runs L-BFGS with a strong Wolfe line search from `y = 0`,
//! 3. [`oracle`] maps certificates back and re-verifies them independently.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature for the
//! BLAS-backed matrix products used on large instances.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod instances;
pub mod logpart;
pub mod moment_map;
pub mod oracle;
pub mod precondition;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use instances::Instance;
pub use logpart::{DualEval, DualObjective};
pub use moment_map::MomentMap;
pub use oracle::{decide, MembershipReport, Verdict};
pub use precondition::{PreconditionedInstance, TransformRecord};
pub use solver::{minimize, SolveOutcome, SolverConfig};
pub use spectral::{DensityMatrix, SpectralDecomposition, SymMatrix};

/// Dense real vector used for `b`, `y` and gradients.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
