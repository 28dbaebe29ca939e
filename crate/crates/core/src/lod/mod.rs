//! Localized orthogonal decomposition.
//!
//! The fine-scale space `W` is the kernel of the quasi-interpolation. Element
//! correctors project `K_T`-data onto `W` restricted to a coarse patch, their
//! sum corrects the coarse basis, and a Galerkin solve in the corrected space
//! gives the multiscale approximation. Fine-scale reference and plain coarse
//! finite element solves live here too since they share the dof layout.

mod corrector;
mod multiscale;
mod oracle;
mod reference;

pub use corrector::{
    build_corrector_basis, element_corrector, CorrectorBasis, CorrectorOptions, CorrectorStats, PatchProblem,
};
pub use multiscale::{
    assemble_multiscale, lod_solve, solve_coarse_fem, solve_multiscale, GalerkinSolution, LodOptions,
    MultiscaleSystem,
};
pub use oracle::{IdealOracle, DEFAULT_ORACLE_CAP};
pub use reference::{solve_reference, ReferenceMethod};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::QuasiInterpolator;
use crate::mesh::CoarseMesh;
use crate::network::SpatialNetwork;
use crate::operators::AssembledOperator;

/// Coarse mesh, interpolator and node partition of one network.
#[derive(Debug, Clone)]
pub struct CoarseSpace {
    mesh: CoarseMesh,
    interp: QuasiInterpolator,
    parts: Vec<Vec<usize>>,
    dirichlet: Vec<bool>,
}

impl CoarseSpace {
    /// Fails if a Dirichlet node of the network is seen by a free coarse
    /// basis function, since the coarse space would then violate the
    /// boundary condition.
    pub fn new(net: &SpatialNetwork, mesh: CoarseMesh, mass_diag: &[f64]) -> Result<Self> {
        let interp = QuasiInterpolator::new(&mesh, net, mass_diag)?;
        let parts = mesh.partition(net)?;
        let dirichlet = net.dirichlet_mask().to_vec();
        let phi = interp.phi_free();
        for (x, _) in dirichlet.iter().enumerate().filter(|(_, &d)| d) {
            let (_, vals) = phi.row(x);
            if vals.iter().any(|v| v.abs() > 1e-12) {
                return Err(Error::Mesh(format!(
                    "Dirichlet node {x} is not on a Dirichlet face of the coarse mesh"
                )));
            }
        }
        Ok(Self {
            mesh,
            interp,
            parts,
            dirichlet,
        })
    }

    pub fn mesh(&self) -> &CoarseMesh {
        &self.mesh
    }

    pub fn interp(&self) -> &QuasiInterpolator {
        &self.interp
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn element_nodes(&self, t: usize) -> &[usize] {
        &self.parts[t]
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn n_nodes(&self) -> usize {
        self.dirichlet.len()
    }

    pub fn n_free(&self) -> usize {
        self.interp.n_free()
    }

    /// Dofs not fixed by the boundary condition, ascending.
    pub fn free_dofs(&self, n_comp: usize) -> Vec<usize> {
        let n = self.n_nodes();
        (0..n_comp)
            .flat_map(|c| (0..n).filter(|&x| !self.dirichlet[x]).map(move |x| c * n + x))
            .collect()
    }

    /// Coarse extension of boundary data: `Σ data(z_k) φ_k` over the mesh
    /// nodes on Dirichlet faces, evaluated on the network.
    pub fn coarse_lifting(&self, n_comp: usize, data: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let n = self.n_nodes();
        let phi = self.interp.phi();
        let m = self.mesh.num_nodes();
        let n_free = self.n_free();
        let values: Vec<Vec<f64>> = (n_free..m).map(|k| data(&self.mesh.node_coords(k))).collect();
        let mut g = vec![0.0; n_comp * n];
        for x in 0..n {
            let (cols, vals) = phi.row(x);
            for (&k, &w) in cols.iter().zip(vals) {
                if k < n_free {
                    continue;
                }
                for c in 0..n_comp {
                    g[c * n + x] += w * values[k - n_free][c];
                }
            }
        }
        g
    }

    /// Relative max-norm distance of `g` from the full coarse space.
    pub fn lifting_defect(&self, g: &[f64]) -> Result<f64> {
        let n = self.n_nodes();
        if g.is_empty() || g.len() % n != 0 {
            return Err(Error::DimensionMismatch {
                context: "dirichlet_lifting",
                expected: n,
                got: g.len(),
            });
        }
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for gc in g.chunks(n) {
            let coarse = self.interp.phi().mul_vec(&self.interp.psi().mul_vec(gc));
            for (a, b) in gc.iter().zip(&coarse) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst / scale)
    }
}

/// `sqrt(vᵀKv)`.
pub fn energy_norm(op: &AssembledOperator, v: &[f64]) -> f64 {
    op.matrix().quad_form(v).max(0.0).sqrt()
}

/// `sqrt(Σ_c vᵀMv)` for a diagonal mass and any number of components.
pub fn mass_norm(mass_diag: &[f64], v: &[f64]) -> f64 {
    let n = mass_diag.len();
    v.iter()
        .enumerate()
        .map(|(i, x)| mass_diag[i % n] * x * x)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub energy: f64,
    pub energy_rel: f64,
    pub mass: f64,
    pub mass_rel: f64,
}

/// Errors of `u` against `reference` in the energy and mass norms.
pub fn error_norms(op: &AssembledOperator, mass_diag: &[f64], reference: &[f64], u: &[f64]) -> ErrorNorms {
    let e: Vec<f64> = reference.iter().zip(u).map(|(a, b)| a - b).collect();
    let energy = energy_norm(op, &e);
    let mass = mass_norm(mass_diag, &e);
    let re = energy_norm(op, reference);
    let rm = mass_norm(mass_diag, reference);
    ErrorNorms {
        energy,
        energy_rel: if re > 0.0 { energy / re } else { energy },
        mass,
        mass_rel: if rm > 0.0 { mass / rm } else { mass },
    }
}

/// Load `M·c` for a constant vector `c` (one entry per component).
pub fn constant_load(mass_diag: &[f64], c: &[f64]) -> Vec<f64> {
    c.iter().flat_map(|&ci| mass_diag.iter().map(move |m| m * ci)).collect()
}
