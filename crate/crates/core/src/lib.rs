//! Lower-bound functionals on the positive-semidefinite rank of nonnegative
//! matrices, and tools for checking that each of them is bounded by a
//! polynomial in the ordinary rank.
//!
//! - [`matrix`]: nonnegative, stochastic (columns sum to 1) and joint
//!   (total mass 1) matrices, numerical rank, scaling, random rank-`r` inputs.
//! - [`functionals`]: fidelity, mutual information, `B2..B5`, the mean
//!   statistical distance `S(M)` and bound reports.
//! - [`qp`]: simplex-constrained convex quadratic minimization used by `B3`
//!   and `B5`, with lattice oracles.
//! - [`elimination`]: eps-transformations and iterated row reduction.
//! - [`polytope`]: standard polytopes and their slack matrices.
//! - [`factorization`]: verification of nonnegative and PSD factorizations.

#![forbid(unsafe_code)]

pub mod elimination;
pub mod error;
pub mod factorization;
pub mod format;
pub mod functionals;
pub mod matrix;
pub mod polytope;
pub mod qp;

pub use error::{Error, Result};
pub use functionals::{bound_report, bound_report_joint, BoundReport, FunctionalSet, ReportOptions};
pub use matrix::{
    column_normalize, global_normalize, numerical_rank, random_rank_r_stochastic, scale, JointDistribution, NonnegMatrix,
    StochasticMatrix,
};
