//! Equality-constrained quadratic minimization via the KKT system
//! `[A Cᵀ; C 0][x; λ] = [b; h]`.
//!
//! `A` is factored once (sparse Cholesky). When `A` is only semidefinite the
//! augmented matrix `A + ρCᵀC` is factored instead, which leaves the solution
//! unchanged on `Cx = h`. The multipliers come from the dense Schur
//! complement `S = C A⁻¹ Cᵀ`, which is small because the constraint count is
//! bounded by the number of coarse nodes in a patch.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{SolveReport, SparseCholesky};
use crate::error::{Error, Result};
use crate::sparse::{norm2, CsrMatrix};

#[derive(Debug, Clone, Copy)]
pub struct SaddleOptions {
    /// Drop exactly repeated constraint rows instead of rejecting them.
    pub dedupe_constraints: bool,
    pub tol: f64,
    pub max_refinement: usize,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self {
            dedupe_constraints: true,
            tol: 1e-10,
            max_refinement: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaddleFactor {
    a: CsrMatrix,
    /// Kept constraint rows.
    c: CsrMatrix,
    /// Original index of each kept row.
    kept: Vec<usize>,
    n_constraints: usize,
    rho: f64,
    chol: SparseCholesky,
    /// `A_ρ⁻¹ Cᵀ`, one column per kept constraint.
    y: DMatrix<f64>,
    schur: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    opts: SaddleOptions,
}

fn rows_equal(c: &CsrMatrix, i: usize, j: usize) -> bool {
    let (ci, vi) = c.row(i);
    let (cj, vj) = c.row(j);
    if ci != cj {
        return false;
    }
    let scale = vi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    vi.iter().zip(vj).all(|(a, b)| (a - b).abs() <= 1e-14 * scale)
}

impl SaddleFactor {
    pub fn new(a: &CsrMatrix, c: &CsrMatrix, opts: SaddleOptions) -> Result<Self> {
        let n = a.nrows();
        if c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "saddle_solve",
                expected: n,
                got: c.ncols(),
            });
        }
        let nc = c.nrows();
        let mut kept = Vec::with_capacity(nc);
        for i in 0..nc {
            if c.row(i).0.is_empty() {
                return Err(Error::Singular {
                    context: "saddle_solve",
                    detail: format!("constraint row {i} is empty"),
                });
            }
            if kept.iter().any(|&j| rows_equal(c, i, j)) {
                if opts.dedupe_constraints {
                    continue;
                }
                return Err(Error::Singular {
                    context: "saddle_solve",
                    detail: format!("constraint row {i} duplicates an earlier row"),
                });
            }
            kept.push(i);
        }
        let c_kept = if kept.len() == nc {
            c.clone()
        } else {
            let all_cols: Vec<usize> = (0..n).collect();
            c.submatrix_mapped(&kept, &all_cols, n)
        };

        let (chol, rho) = match SparseCholesky::factor(a) {
            Ok(ch) => (ch, 0.0),
            Err(err) if kept.is_empty() => return Err(err),
            Err(_) => {
                let ctc = c_kept.transpose().matmul(&c_kept);
                let amax = a.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
                let cmax = ctc.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
                let rho = if cmax > 0.0 { amax.max(1e-300) / cmax } else { 1.0 };
                let aug = a.add(&ctc.scale(rho));
                let ch = SparseCholesky::factor(&aug).map_err(|e| Error::Singular {
                    context: "saddle_solve",
                    detail: format!("KKT system singular: A is not definite on ker C ({e})"),
                })?;
                (ch, rho)
            }
        };

        let m = kept.len();
        let mut y = DMatrix::zeros(n, m);
        let mut col = vec![0.0; n];
        for j in 0..m {
            col.iter_mut().for_each(|v| *v = 0.0);
            // Column j of Cᵀ is row j of C.
            let (idx, vals) = c_kept.row(j);
            for (&i, &v) in idx.iter().zip(vals) {
                col[i] = v;
            }
            let sol = chol.solve(&col);
            y.column_mut(j).copy_from_slice(&sol);
        }
        let schur = if m > 0 {
            let mut s = DMatrix::zeros(m, m);
            for j in 0..m {
                let yj: Vec<f64> = y.column(j).iter().copied().collect();
                let cy = c_kept.mul_vec(&yj);
                for i in 0..m {
                    s[(i, j)] = cy[i];
                }
            }
            let s = (&s + s.transpose()) * 0.5;
            let smax = s.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let min_diag = s.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(*v));
            let ch = s.clone().cholesky().ok_or_else(|| Error::Singular {
                context: "saddle_solve",
                detail: "constraint rows are linearly dependent (Schur complement not definite)".into(),
            })?;
            // Reject numerically rank-deficient constraint sets.
            let lmin = ch.l().diagonal().iter().fold(f64::INFINITY, |a, v| a.min(*v));
            if lmin * lmin < 1e-13 * smax || min_diag <= 0.0 {
                return Err(Error::Singular {
                    context: "saddle_solve",
                    detail: format!(
                        "constraint rows are numerically dependent (Schur pivot {:.3e} vs {:.3e})",
                        lmin * lmin,
                        smax
                    ),
                });
            }
            Some(ch)
        } else {
            None
        };

        Ok(Self {
            a: a.clone(),
            c: c_kept,
            kept,
            n_constraints: nc,
            rho,
            chol,
            y,
            schur,
            opts,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn augmentation(&self) -> f64 {
        self.rho
    }

    fn solve_once(&self, b: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rhs = b.to_vec();
        if self.rho != 0.0 {
            let cth = self.c.mul_vec_transpose(h);
            for (r, v) in rhs.iter_mut().zip(&cth) {
                *r += self.rho * v;
            }
        }
        let mut x = self.chol.solve(&rhs);
        let Some(schur) = &self.schur else {
            return (x, Vec::new());
        };
        let cx = self.c.mul_vec(&x);
        let g = DVector::from_iterator(cx.len(), cx.iter().zip(h).map(|(a, b)| a - b));
        let lambda = schur.solve(&g);
        let corr = &self.y * &lambda;
        for (xi, ci) in x.iter_mut().zip(corr.iter()) {
            *xi -= ci;
        }
        (x, lambda.iter().copied().collect())
    }

    fn residual(&self, b: &[f64], h: &[f64], x: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let mut r1 = b.to_vec();
        let ax = self.a.mul_vec(x);
        let ctl = self.c.mul_vec_transpose(lambda);
        for i in 0..r1.len() {
            r1[i] -= ax[i] + ctl[i];
        }
        let cx = self.c.mul_vec(x);
        let r2: Vec<f64> = h.iter().zip(&cx).map(|(h, c)| h - c).collect();
        let bscale = norm2(b).max(norm2(&ax)).max(f64::MIN_POSITIVE);
        let cscale = (norm2(h) + self.c.max_abs() * norm2(x)).max(f64::MIN_POSITIVE);
        let rel = if norm2(b) == 0.0 && norm2(h) == 0.0 {
            0.0
        } else {
            (norm2(&r1) / bscale).max(norm2(&r2) / cscale)
        };
        (r1, r2, rel)
    }

    /// Solve with constraint right-hand side `h` (`None` means `Cx = 0`).
    /// Returns `x` and the multipliers indexed like the original rows of `C`
    /// (dropped duplicates get zero).
    pub fn solve(&self, b: &[f64], h: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>, SolveReport)> {
        let start = Instant::now();
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                context: "saddle_solve",
                expected: n,
                got: b.len(),
            });
        }
        let m = self.kept.len();
        let h_kept: Vec<f64> = match h {
            Some(h) => {
                if h.len() != self.n_constraints {
                    return Err(Error::DimensionMismatch {
                        context: "saddle_solve",
                        expected: self.n_constraints,
                        got: h.len(),
                    });
                }
                self.kept.iter().map(|&i| h[i]).collect()
            }
            None => vec![0.0; m],
        };
        let (mut x, mut lambda) = self.solve_once(b, &h_kept);
        let (mut r1, mut r2, mut rel) = self.residual(b, &h_kept, &x, &lambda);
        let mut iterations = 1;
        while rel > 1e-2 * self.opts.tol && iterations <= self.opts.max_refinement {
            let (dx, dl) = self.solve_once(&r1, &r2);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            for (li, di) in lambda.iter_mut().zip(&dl) {
                *li += di;
            }
            let (nr1, nr2, nrel) = self.residual(b, &h_kept, &x, &lambda);
            iterations += 1;
            if nrel >= rel {
                rel = nrel.min(rel);
                break;
            }
            r1 = nr1;
            r2 = nr2;
            rel = nrel;
        }
        if rel > self.opts.tol {
            return Err(Error::NotConverged {
                context: "saddle_solve",
                iterations,
                residual: rel,
            });
        }
        let mut full_lambda = vec![0.0; self.n_constraints];
        for (k, &i) in self.kept.iter().enumerate() {
            full_lambda[i] = lambda[k];
        }
        Ok((
            x,
            full_lambda,
            SolveReport {
                method: if self.rho == 0.0 { "kkt-schur" } else { "kkt-schur-augmented" },
                iterations,
                relative_residual: rel,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        ))
    }
}

/// One-shot solve of `min ½xᵀAx − bᵀx` subject to `Cx = 0`.
pub fn saddle_solve(
    a: &CsrMatrix,
    c: &CsrMatrix,
    b: &[f64],
    opts: SaddleOptions,
) -> Result<(Vec<f64>, Vec<f64>, SolveReport)> {
    SaddleFactor::new(a, c, opts)?.solve(b, None)
}
