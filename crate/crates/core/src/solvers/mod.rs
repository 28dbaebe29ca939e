//! Linear-algebra kernels shared by the LOD engine and the audits.

pub mod cg;
pub mod cholesky;
pub mod eigen;
pub mod ordering;
pub mod saddle;

pub use cg::{cg_solve, CgOptions, Preconditioner};
pub use cholesky::SparseCholesky;
pub use eigen::{generalized_eig_smallest, EigenTarget, EigenResult};
pub use saddle::{saddle_solve, SaddleFactor, SaddleOptions};

use serde::Serialize;

/// Outcome of an iterative or direct solve. `relative_residual` is always
/// recomputed from the returned solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub method: &'static str,
    pub iterations: usize,
    pub relative_residual: f64,
    pub wall_time_s: f64,
}
