//! Galerkin solves in the corrected (or plain) coarse space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use super::corrector::{build_corrector_basis, CorrectorBasis, CorrectorOptions};
use super::CoarseSpace;
use crate::error::{Error, Result};
use crate::operators::AssembledOperator;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy)]
pub struct LodOptions {
    pub k: usize,
    pub corrector: CorrectorOptions,
}

impl LodOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            corrector: CorrectorOptions::default(),
        }
    }
}

/// Reduced stiffness `BᵀKB` of a basis `B`, factored.
#[derive(Debug, Clone)]
pub struct MultiscaleSystem {
    basis: CsrMatrix,
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    asymmetry: f64,
    dirichlet_dofs: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GalerkinSolution {
    pub u: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub reduced_dim: usize,
    /// `max|A − Aᵀ| / max|A|` of the reduced matrix before symmetrization.
    pub asymmetry: f64,
}

fn dirichlet_dofs(space: &CoarseSpace, n_comp: usize) -> Vec<usize> {
    let n = space.n_nodes();
    (0..n_comp)
        .flat_map(|c| {
            space
                .dirichlet_mask()
                .iter()
                .enumerate()
                .filter(|(_, &d)| d)
                .map(move |(x, _)| c * n + x)
        })
        .collect()
}

impl MultiscaleSystem {
    fn from_basis(context: &'static str, k: &CsrMatrix, basis: CsrMatrix, dirichlet_dofs: Vec<usize>) -> Result<Self> {
        let kb = k.matmul(&basis);
        let a = basis.transpose().matmul(&kb).to_dense();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let asym = (&a - a.transpose()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let asymmetry = if scale > 0.0 { asym / scale } else { 0.0 };
        if asymmetry > 1e-8 {
            return Err(Error::OperatorDefect {
                context,
                detail: format!("reduced matrix asymmetry {asymmetry:.3e}"),
            });
        }
        let matrix = (&a + a.transpose()) * 0.5;
        let chol = Cholesky::new(matrix.clone()).ok_or_else(|| Error::Singular {
            context,
            detail: format!("reduced matrix of size {} is not positive definite", matrix.nrows()),
        })?;
        Ok(Self {
            basis,
            matrix,
            chol,
            asymmetry,
            dirichlet_dofs,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn reduced_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn basis(&self) -> &CsrMatrix {
        &self.basis
    }

    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// `Bᵀf`.
    pub fn reduced_load(&self, f: &[f64]) -> Vec<f64> {
        self.basis.mul_vec_transpose(f)
    }

    /// Galerkin solution for load `f` with zero boundary values.
    pub fn solve(&self, f: &[f64]) -> Result<GalerkinSolution> {
        if f.len() != self.basis.nrows() {
            return Err(Error::DimensionMismatch {
                context: "solve_multiscale",
                expected: self.basis.nrows(),
                got: f.len(),
            });
        }
        let rhs = DVector::from_vec(self.reduced_load(f));
        let coeffs = self.chol.solve(&rhs).as_slice().to_vec();
        let mut u = self.basis.mul_vec(&coeffs);
        for &d in &self.dirichlet_dofs {
            u[d] = 0.0;
        }
        Ok(GalerkinSolution {
            u,
            coeffs,
            reduced_dim: self.dim(),
            asymmetry: self.asymmetry,
        })
    }
}

/// Reduced system of the corrected basis `φ_j e_c − q_s`.
pub fn assemble_multiscale(op: &AssembledOperator, space: &CoarseSpace, basis: &CorrectorBasis) -> Result<MultiscaleSystem> {
    MultiscaleSystem::from_basis(
        "assemble_multiscale",
        op.matrix(),
        basis.basis_matrix(space),
        dirichlet_dofs(space, op.n_comp()),
    )
}

/// Load `f − Kg` of the homogeneous part of a lifted problem.
fn lifted_load(op: &AssembledOperator, f: &[f64], g: Option<&[f64]>) -> Result<Vec<f64>> {
    if f.len() != op.size() {
        return Err(Error::DimensionMismatch {
            context: "solve_multiscale",
            expected: op.size(),
            got: f.len(),
        });
    }
    match g {
        None => Ok(f.to_vec()),
        Some(g) => {
            if g.len() != op.size() {
                return Err(Error::DimensionMismatch {
                    context: "dirichlet_lifting",
                    expected: op.size(),
                    got: g.len(),
                });
            }
            let kg = op.matrix().mul_vec(g);
            Ok(f.iter().zip(&kg).map(|(a, b)| a - b).collect())
        }
    }
}

/// Multiscale solution `u_H^k + (1 − Q̂^k)g`, where `u_H^k` solves the
/// homogeneous problem with load `f − Kg`. Without `g` this is the plain
/// Galerkin solution in the corrected space.
pub fn solve_multiscale(
    op: &AssembledOperator,
    sys: &MultiscaleSystem,
    basis: &CorrectorBasis,
    f: &[f64],
    g: Option<&[f64]>,
) -> Result<GalerkinSolution> {
    let load = lifted_load(op, f, g)?;
    let mut sol = sys.solve(&load)?;
    if let Some(g) = g {
        let qg = basis.lifting_corrector().ok_or_else(|| {
            Error::InvalidInput("corrector basis was built without the lifting of g".into())
        })?;
        for (u, gi) in sol.u.iter_mut().zip(g) {
            *u += gi;
        }
        qg.add_to(-1.0, &mut sol.u);
    }
    Ok(sol)
}

/// Build correctors, assemble and solve in one go.
pub fn lod_solve(
    op: &AssembledOperator,
    space: &CoarseSpace,
    f: &[f64],
    g: Option<&[f64]>,
    opts: &LodOptions,
) -> Result<(GalerkinSolution, CorrectorBasis)> {
    let basis = build_corrector_basis(op, space, opts.k, g, &opts.corrector)?;
    let sys = assemble_multiscale(op, space, &basis)?;
    let sol = solve_multiscale(op, &sys, &basis, f, g)?;
    Ok((sol, basis))
}

/// Galerkin solution in the uncorrected coarse space, `+ g` if given.
pub fn solve_coarse_fem(
    op: &AssembledOperator,
    space: &CoarseSpace,
    f: &[f64],
    g: Option<&[f64]>,
) -> Result<GalerkinSolution> {
    let n = space.n_nodes();
    let nc = op.n_comp();
    let m0 = space.n_free();
    let trips: Vec<_> = (0..nc)
        .flat_map(|c| space.interp().phi_free().triplets().map(move |(i, j, v)| (c * n + i, c * m0 + j, v)))
        .collect();
    let basis = CsrMatrix::from_triplets(nc * n, nc * m0, trips);
    let sys = MultiscaleSystem::from_basis("solve_coarse_fem", op.matrix(), basis, dirichlet_dofs(space, nc))?;
    let load = lifted_load(op, f, g)?;
    let mut sol = sys.solve(&load)?;
    if let Some(g) = g {
        for (u, gi) in sol.u.iter_mut().zip(g) {
            *u += gi;
        }
    }
    Ok(sol)
}
