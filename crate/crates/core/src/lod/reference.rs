//! Fine-scale reference solve with prescribed boundary values.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{cg_solve, CgOptions, SolveReport, SparseCholesky};
use crate::sparse::norm2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMethod {
    /// Jacobi-preconditioned CG.
    #[default]
    Pcg,
    /// Sparse Cholesky of the free block.
    Direct,
}

/// Solve `Ku = f` on the free dofs with `u = g` on the Dirichlet dofs
/// (`g = None` means zero). `dirichlet` is the per-node mask; all
/// components of a Dirichlet node are fixed.
pub fn solve_reference(
    k: &crate::sparse::CsrMatrix,
    f: &[f64],
    dirichlet: &[bool],
    g: Option<&[f64]>,
    method: ReferenceMethod,
    tol: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    let size = k.nrows();
    let n = dirichlet.len();
    if f.len() != size || n == 0 || size % n != 0 {
        return Err(Error::DimensionMismatch {
            context: "solve_reference",
            expected: size,
            got: f.len(),
        });
    }
    if let Some(g) = g {
        if g.len() != size {
            return Err(Error::DimensionMismatch {
                context: "solve_reference",
                expected: size,
                got: g.len(),
            });
        }
    }
    let start = Instant::now();
    let is_fixed = |i: usize| dirichlet[i % n];
    let free: Vec<usize> = (0..size).filter(|&i| !is_fixed(i)).collect();
    let mut u = vec![0.0; size];
    if let Some(g) = g {
        for i in (0..size).filter(|&i| is_fixed(i)) {
            u[i] = g[i];
        }
    }
    // Move the boundary values to the right-hand side.
    let ku = k.mul_vec(&u);
    let rhs: Vec<f64> = free.iter().map(|&i| f[i] - ku[i]).collect();
    let kff = k.principal_submatrix(&free);
    let (xf, mut report) = match method {
        ReferenceMethod::Pcg => {
            let opts = CgOptions {
                tol,
                ..CgOptions::default()
            };
            cg_solve(&kff, &rhs, None, &opts)?
        }
        ReferenceMethod::Direct => {
            let chol = SparseCholesky::factor(&kff).map_err(|e| match e {
                Error::Singular { detail, .. } => Error::Singular {
                    context: "solve_reference",
                    detail: format!("constrained stiffness is singular; check the Dirichlet nodes ({detail})"),
                },
                other => other,
            })?;
            let mut x = chol.solve(&rhs);
            // Iterative refinement for badly scaled operators.
            let denom = norm2(&rhs);
            let mut rel = 0.0;
            let mut rounds = 0;
            while denom > 0.0 {
                let r: Vec<f64> = kff.mul_vec(&x).iter().zip(&rhs).map(|(a, b)| b - a).collect();
                rel = norm2(&r) / denom;
                if rel <= tol || rounds == 3 {
                    break;
                }
                let dx = chol.solve(&r);
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
                rounds += 1;
            }
            if rel > tol {
                return Err(Error::NotConverged {
                    context: "solve_reference",
                    iterations: rounds,
                    residual: rel,
                });
            }
            (
                x,
                SolveReport {
                    method: "cholesky",
                    iterations: rounds,
                    relative_residual: rel,
                    wall_time_s: 0.0,
                },
            )
        }
    };
    for (&i, &v) in free.iter().zip(&xf) {
        u[i] = v;
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((u, report))
}
