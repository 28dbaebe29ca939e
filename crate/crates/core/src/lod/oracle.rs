//! Dense ideal corrector for small networks, built on an explicit
//! orthonormal basis of the fine-scale space. Used to check the localized
//! machinery.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::multiscale::GalerkinSolution;
use super::CoarseSpace;
use crate::error::{Error, Result};
use crate::operators::AssembledOperator;

pub const DEFAULT_ORACLE_CAP: usize = 2000;

#[derive(Debug, Clone)]
pub struct IdealOracle {
    n_comp: usize,
    n_nodes: usize,
    free: Vec<usize>,
    /// Orthonormal basis of `W` on the free dofs, one column per vector.
    null: DMatrix<f64>,
    /// `NᵀKN`, factored.
    kw: Cholesky<f64, Dyn>,
}

impl IdealOracle {
    pub fn new(op: &AssembledOperator, space: &CoarseSpace, cap: usize) -> Result<Self> {
        let nc = op.n_comp();
        let n = op.n_nodes();
        let free = space.free_dofs(nc);
        let nf = free.len();
        if nf > cap {
            return Err(Error::CapExceeded { size: nf, cap });
        }
        let mut pos = vec![usize::MAX; op.size()];
        for (l, &g) in free.iter().enumerate() {
            pos[g] = l;
        }
        let m0 = space.n_free();
        let r = nc * m0;
        if r >= nf {
            return Err(Error::InvalidInput(format!(
                "fine-scale space is trivial: {r} constraints on {nf} free dofs"
            )));
        }
        // Cᵀ, one column per coarse functional.
        let psi = space.interp().psi_free();
        let mut ct = DMatrix::<f64>::zeros(nf, r);
        for c in 0..nc {
            for j in 0..m0 {
                let (cols, vals) = psi.row(j);
                for (&x, &v) in cols.iter().zip(vals) {
                    let l = pos[c * n + x];
                    if l != usize::MAX {
                        ct[(l, c * m0 + j)] = v;
                    }
                }
            }
        }
        let qr = ct.qr();
        let rdiag = qr.r().diagonal();
        let rmax = rdiag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rdiag.iter().any(|v| v.abs() <= 1e-12 * rmax) {
            return Err(Error::Singular {
                context: "ideal_corrector_oracle",
                detail: "coarse functionals are linearly dependent on the free dofs".into(),
            });
        }
        let mut qt = DMatrix::<f64>::identity(nf, nf);
        qr.q_tr_mul(&mut qt);
        // Rows r.. of Qᵀ span the orthogonal complement of range(Cᵀ).
        let null = qt.rows(r, nf - r).transpose();

        let kff = op.matrix().principal_submatrix(&free).to_dense();
        let kw = null.transpose() * &kff * &null;
        let kw = Cholesky::new((&kw + kw.transpose()) * 0.5).ok_or_else(|| Error::Singular {
            context: "ideal_corrector_oracle",
            detail: "stiffness is not positive definite on the fine-scale space".into(),
        })?;
        Ok(Self {
            n_comp: nc,
            n_nodes: n,
            free,
            null,
            kw,
        })
    }

    /// Dimension of `W`.
    pub fn fine_dim(&self) -> usize {
        self.null.ncols()
    }

    /// Basis vector `i` of `W` as a full dof-vector.
    pub fn fine_basis_vector(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_comp * self.n_nodes];
        for (l, &g) in self.free.iter().enumerate() {
            v[g] = self.null[(l, i)];
        }
        v
    }

    /// `q ∈ W` with `(Kq, w) = (load, w)` for all `w ∈ W`.
    pub fn project(&self, load: &[f64]) -> Vec<f64> {
        let lf = DVector::from_iterator(self.free.len(), self.free.iter().map(|&g| load[g]));
        let y = self.kw.solve(&(self.null.transpose() * lf));
        let qf = &self.null * y;
        let mut q = vec![0.0; self.n_comp * self.n_nodes];
        for (l, &g) in self.free.iter().enumerate() {
            q[g] = qf[l];
        }
        q
    }

    /// Ideal corrector `Qv`; for `v` with boundary values this is the
    /// extended corrector.
    pub fn corrector(&self, op: &AssembledOperator, v: &[f64]) -> Vec<f64> {
        self.project(&op.matrix().mul_vec(v))
    }

    /// Ideal element corrector `Q_T v`.
    pub fn element_corrector(&self, op: &AssembledOperator, space: &CoarseSpace, t: usize, v: &[f64]) -> Vec<f64> {
        self.project(&op.restrict(space.element_nodes(t)).mul_vec(v))
    }

    /// Galerkin solution in `(1 − Q)V_H`, lifted by `(1 − Q)g` with load
    /// `f − Kg` when `g` is given.
    pub fn galerkin(
        &self,
        op: &AssembledOperator,
        space: &CoarseSpace,
        f: &[f64],
        g: Option<&[f64]>,
    ) -> Result<GalerkinSolution> {
        let size = op.size();
        let n = self.n_nodes;
        let m0 = space.n_free();
        let s = self.n_comp * m0;
        let phi = space.interp().phi_free();
        let mut b = DMatrix::<f64>::zeros(size, s);
        for c in 0..self.n_comp {
            for j in 0..m0 {
                let mut v = vec![0.0; size];
                for x in 0..n {
                    v[c * n + x] = phi.get(x, j);
                }
                let q = self.corrector(op, &v);
                for i in 0..size {
                    b[(i, c * m0 + j)] = v[i] - q[i];
                }
            }
        }
        let k = op.matrix().to_dense();
        let a = b.transpose() * &k * &b;
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let asym = (&a - a.transpose()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let chol = Cholesky::new((&a + a.transpose()) * 0.5).ok_or_else(|| Error::Singular {
            context: "ideal_corrector_oracle",
            detail: "ideal reduced matrix is not positive definite".into(),
        })?;
        let mut load = DVector::from_column_slice(f);
        if let Some(g) = g {
            load -= &k * DVector::from_column_slice(g);
        }
        let coeffs = chol.solve(&(b.transpose() * load));
        let mut u: Vec<f64> = (&b * &coeffs).as_slice().to_vec();
        if let Some(g) = g {
            let qg = self.corrector(op, g);
            for i in 0..size {
                u[i] += g[i] - qg[i];
            }
        }
        for (i, ui) in u.iter_mut().enumerate() {
            if space.dirichlet_mask()[i % n] && g.is_none() {
                *ui = 0.0;
            }
        }
        Ok(GalerkinSolution {
            u,
            coeffs: coeffs.as_slice().to_vec(),
            reduced_dim: s,
            asymmetry: if scale > 0.0 { asym / scale } else { 0.0 },
        })
    }
}
