//! Alternating solvers for multi-echo deep dictionary learning.
//!
//! The split objective minimised by [`Solver`] is
//!
//! ```text
//! sum_j ||y_j - R_j F x_j||^2
//!   + lambda * ( ||P X - D_1 Z_1||^2 + mu1 ||Z_1 - D_2 Z_2||^2 + mu2 ||Z_2 - D_3 Z||^2
//!                + gamma * pen(Z) ),      Z_1, Z_2 >= 0
//! ```
//!
//! where `pen` is the `l2,1` norm (row-sparse) or the nuclear norm (low-rank)
//! of every per-patch code matrix. Each outer iteration updates, in order,
//! the images (P1), the dictionaries (P2-P4), the proxies (P5-P6) and the
//! codes (P7). Two- and four-layer chains drop or add one proxy level; a
//! single layer is the shallow group-sparse model.

mod config;
mod solver;

pub use config::{atom_counts, SolverConfig};
pub use solver::{
    shallow_config, solve, solve_shallow, DeepDictionary, ImageSolve, ObjectiveTerms, ReconReport, Solver,
};
