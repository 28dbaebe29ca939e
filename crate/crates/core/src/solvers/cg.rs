//! Preconditioned conjugate gradients.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SolveReport;
use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub precond: Preconditioner,
    /// Run a randomized symmetry probe before iterating.
    pub check_symmetry: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            precond: Preconditioner::Jacobi,
            check_symmetry: true,
        }
    }
}

fn symmetry_probe(a: &CsrMatrix) -> Result<()> {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..2 {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vau = dot(&v, &a.mul_vec(&u));
        let uav = dot(&u, &a.mul_vec(&v));
        let scale = a.max_abs() * norm2(&u) * norm2(&v) * (n as f64).sqrt();
        if (vau - uav).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::OperatorDefect {
                context: "cg_solve",
                detail: format!("matrix is not symmetric (probe mismatch {:.3e})", (vau - uav).abs()),
            });
        }
    }
    Ok(())
}

/// Solve `A x = b` for symmetric positive definite `A`, stopping when
/// `‖Ax − b‖₂ ≤ tol·‖b‖₂`.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &CgOptions) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = a.nrows();
    if b.len() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "cg_solve",
            expected: n,
            got: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("cg_solve: right-hand side is not finite".into()));
    }
    if opts.check_symmetry {
        symmetry_probe(a)?;
    }
    let bnorm = norm2(b);
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                method: "pcg",
                iterations: 0,
                relative_residual: 0.0,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        ));
    }
    let inv_diag: Vec<f64> = match opts.precond {
        Preconditioner::Jacobi => a
            .diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
        Preconditioner::None => vec![1.0; n],
    };

    let mut r = b.to_vec();
    let ax = a.mul_vec(&x);
    axpy(-1.0, &ax, &mut r);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    loop {
        // Check against the recomputed residual once the recursion says we are done.
        if norm2(&r) <= opts.tol * bnorm {
            let mut true_r = b.to_vec();
            axpy(-1.0, &a.mul_vec(&x), &mut true_r);
            let rel = norm2(&true_r) / bnorm;
            if rel <= opts.tol {
                return Ok((
                    x,
                    SolveReport {
                        method: "pcg",
                        iterations,
                        relative_residual: rel,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    },
                ));
            }
            r = true_r;
            z = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
            p.clone_from(&z);
            rz = dot(&r, &z);
        }
        if iterations >= opts.max_iter {
            let mut true_r = b.to_vec();
            axpy(-1.0, &a.mul_vec(&x), &mut true_r);
            return Err(Error::NotConverged {
                context: "cg_solve",
                iterations,
                residual: norm2(&true_r) / bnorm,
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular {
                context: "cg_solve",
                detail: format!("nonpositive curvature pᵀAp = {pap:.3e} at iteration {iterations}"),
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn diagonal_converges_immediately() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let (x, rep) = cg_solve(&a, &[1.0, 1.0, 1.0, 1.0], None, &CgOptions::default()).unwrap();
        assert!(rep.iterations <= 2);
        assert!((x[3] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_hand_inverse() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let opts = CgOptions {
            precond: Preconditioner::None,
            ..Default::default()
        };
        let (x, _) = cg_solve(&a, &[1.0, 0.0], None, &opts).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((x[1] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_laplacian_with_dirichlet_matches_dense() {
        // 5×5 grid; boundary nodes eliminated, unit load on the 3×3 interior.
        let n = 5;
        let interior: Vec<(usize, usize)> = (1..n - 1).flat_map(|i| (1..n - 1).map(move |j| (i, j))).collect();
        let id = |i: usize, j: usize| interior.iter().position(|&p| p == (i, j));
        let m = interior.len();
        let mut t = Vec::new();
        for (k, &(i, j)) in interior.iter().enumerate() {
            t.push((k, k, 4.0));
            for (a, b) in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)] {
                if let Some(l) = id(a, b) {
                    t.push((k, l, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(m, m, t);
        let b = vec![1.0; m];
        let (x, rep) = cg_solve(&a, &b, None, &CgOptions::default()).unwrap();
        let xd = a.to_dense().lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..m {
            assert!((x[i] - xd[i]).abs() < 1e-9);
        }
        assert!(rep.relative_residual <= 1e-10);
    }

    #[test]
    fn rejects_nonsymmetric() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]));
        assert!(matches!(
            cg_solve(&a, &[1.0, 0.0], None, &CgOptions::default()),
            Err(Error::OperatorDefect { .. })
        ));
    }
}
