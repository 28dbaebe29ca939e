//! Quasi-interpolation onto the coarse space through an M-dual basis.
//!
//! Every mesh node `k` is assigned the element `T_k` containing it. On
//! `T_k` the dual function `ψ_k = Σ_ℓ α_ℓ φ_ℓ` satisfies
//! `(M_{T_k} ψ_k, φ_ℓ) = δ_kℓ` for the corner functions of `T_k`, which
//! makes `𝓘v = Σ_{k free} (M_{T_k} ψ_k, v) φ_k` a projection.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::CoarseMesh;
use crate::network::SpatialNetwork;
use crate::sparse::CsrMatrix;

/// Relative eigenvalue threshold below which an element Gram matrix is
/// declared singular.
pub const GRAM_SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct QuasiInterpolator {
    n_nodes: usize,
    n_free: usize,
    /// `m × |𝒩|`, row `k` holds `M_x ψ_k(x)` on the nodes of `T_k`.
    psi: CsrMatrix,
    /// `|𝒩| × m`, `Φ[x, j] = φ_j(x)`.
    phi: CsrMatrix,
    phi_free: CsrMatrix,
    psi_free: CsrMatrix,
    assignment: Vec<usize>,
    psi_norm: Vec<f64>,
    gram_condition: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ElementGramInfo {
    pub element: usize,
    pub nodes: usize,
    pub condition: f64,
}

impl QuasiInterpolator {
    pub fn new(mesh: &CoarseMesh, net: &SpatialNetwork, mass_diag: &[f64]) -> Result<Self> {
        let n = net.num_nodes();
        if mass_diag.len() != n {
            return Err(Error::DimensionMismatch {
                context: "compute_dual_basis",
                expected: n,
                got: mass_diag.len(),
            });
        }
        let parts = mesh.partition(net)?;
        let nc = 1usize << mesh.dim();

        // Gram matrices and their inverses, per element.
        let grams: Vec<Result<(DMatrix<f64>, f64)>> = parts
            .par_iter()
            .enumerate()
            .map(|(e, nodes)| {
                let mut g = DMatrix::<f64>::zeros(nc, nc);
                for &x in nodes {
                    let w = mesh.corner_weights(e, net.coords(x));
                    for i in 0..nc {
                        for j in 0..nc {
                            g[(i, j)] += mass_diag[x] * w[i] * w[j];
                        }
                    }
                }
                let max_diag = (0..nc).map(|i| g[(i, i)]).fold(0.0, f64::max);
                let eig = g.clone().symmetric_eigen();
                let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
                if !(lmin > GRAM_SINGULAR_TOL * max_diag) {
                    return Err(Error::SingularGram { element: e, pivot: lmin });
                }
                let inv = g.cholesky().map(|c| c.inverse()).ok_or(Error::SingularGram {
                    element: e,
                    pivot: lmin,
                })?;
                Ok((inv, lmax / lmin))
            })
            .collect();
        let mut inv_grams = Vec::with_capacity(grams.len());
        let mut gram_condition = Vec::with_capacity(grams.len());
        for g in grams {
            let (inv, cond) = g?;
            inv_grams.push(inv);
            gram_condition.push(cond);
        }

        let m = mesh.num_nodes();
        let mut trips = Vec::new();
        let mut assignment = Vec::with_capacity(m);
        let mut psi_norm = Vec::with_capacity(m);
        for k in 0..m {
            let e = mesh.assignment_element(k);
            let corner = mesh.assignment_corner(k);
            let alpha: DVector<f64> = inv_grams[e].column(corner).into_owned();
            for &x in &parts[e] {
                let w = mesh.corner_weights(e, net.coords(x));
                let psi_x: f64 = (0..nc).map(|l| alpha[l] * w[l]).sum();
                trips.push((k, x, mass_diag[x] * psi_x));
            }
            assignment.push(e);
            psi_norm.push(alpha[corner].max(0.0).sqrt());
        }
        let psi = CsrMatrix::from_triplets(m, n, trips);
        let phi = mesh.basis_matrix(net)?;
        let n_free = mesh.num_free();
        let free: Vec<usize> = (0..n_free).collect();
        let mut col_map = vec![usize::MAX; m];
        for j in 0..n_free {
            col_map[j] = j;
        }
        let all_rows: Vec<usize> = (0..n).collect();
        let phi_free = phi.submatrix_mapped(&all_rows, &col_map, n_free);
        let all_cols: Vec<usize> = (0..n).collect();
        let psi_free = psi.submatrix_mapped(&free, &all_cols, n);
        Ok(Self {
            n_nodes: n,
            n_free,
            psi,
            phi,
            phi_free,
            psi_free,
            assignment,
            psi_norm,
            gram_condition,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn psi(&self) -> &CsrMatrix {
        &self.psi
    }

    pub fn psi_free(&self) -> &CsrMatrix {
        &self.psi_free
    }

    pub fn phi(&self) -> &CsrMatrix {
        &self.phi
    }

    pub fn phi_free(&self) -> &CsrMatrix {
        &self.phi_free
    }

    /// `T_k` for every mesh node.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `|ψ_k|_{M,T_k}` for every mesh node.
    pub fn psi_norms(&self) -> &[f64] {
        &self.psi_norm
    }

    pub fn gram_conditions(&self) -> &[f64] {
        &self.gram_condition
    }

    fn components(&self, len: usize) -> Result<usize> {
        if len == 0 || len % self.n_nodes != 0 {
            return Err(Error::DimensionMismatch {
                context: "interpolate",
                expected: self.n_nodes,
                got: len,
            });
        }
        Ok(len / self.n_nodes)
    }

    /// Functionals `(M_{T_k} ψ_k, v_c)` for free `k`, component-major.
    pub fn coarse_dofs(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.components(v.len())?;
        Ok(v.chunks(self.n_nodes).flat_map(|c| self.psi_free.mul_vec(c)).collect())
    }

    /// Coarse function with the given free-node coefficients, evaluated on
    /// the network.
    pub fn prolong(&self, coeffs: &[f64], n_comp: usize) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), n_comp * self.n_free);
        (0..n_comp)
            .flat_map(|c| self.phi_free.mul_vec(&coeffs[c * self.n_free..(c + 1) * self.n_free]))
            .collect()
    }

    /// `𝓘v`, componentwise.
    pub fn interpolate(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n_comp = self.components(v.len())?;
        let dofs = self.coarse_dofs(v)?;
        Ok(self.prolong(&dofs, n_comp))
    }

    /// `max |ΨΦ − I|` over all mesh nodes.
    pub fn duality_error(&self) -> f64 {
        let pp = self.psi.matmul(&self.phi);
        let m = pp.nrows();
        let mut err: f64 = 0.0;
        for k in 0..m {
            let (cols, vals) = pp.row(k);
            let mut diag_seen = false;
            for (&j, &v) in cols.iter().zip(vals) {
                let target = if j == k {
                    diag_seen = true;
                    1.0
                } else {
                    0.0
                };
                err = err.max((v - target).abs());
            }
            if !diag_seen {
                err = err.max(1.0);
            }
        }
        err
    }

    pub fn gram_info(&self, mesh: &CoarseMesh, net: &SpatialNetwork) -> Result<Vec<ElementGramInfo>> {
        let parts = mesh.partition(net)?;
        Ok(parts
            .iter()
            .enumerate()
            .map(|(e, p)| ElementGramInfo {
                element: e,
                nodes: p.len(),
                condition: self.gram_condition[e],
            })
            .collect())
    }
}
