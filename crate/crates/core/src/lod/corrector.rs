//! Element correctors on coarse patches and their sum over elements.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use super::CoarseSpace;
use crate::error::{Error, Result};
use crate::operators::AssembledOperator;
use crate::solvers::{SaddleFactor, SaddleOptions};
use crate::sparse::{CsrMatrix, SparseVec};

#[derive(Debug, Clone, Copy)]
pub struct CorrectorOptions {
    pub saddle: SaddleOptions,
    /// Elements processed per parallel batch. Results are merged in element
    /// order after each batch, so this bounds memory without affecting the
    /// output.
    pub batch: usize,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        Self {
            saddle: SaddleOptions::default(),
            batch: 64,
        }
    }
}

/// Constrained stiffness system of one patch `U_k(T)`, factored once and
/// reused for every right-hand side of `T`.
#[derive(Debug)]
pub struct PatchProblem {
    element: usize,
    /// Global dofs of the free nodes in the patch, ascending.
    unknowns: Vec<usize>,
    n_constraints: usize,
    factor: SaddleFactor,
}

fn tag_element(e: Error, t: usize) -> Error {
    match e {
        Error::Singular { detail, .. } => Error::Singular {
            context: "element_corrector",
            detail: format!("patch of element {t}: {detail}"),
        },
        other => other,
    }
}

impl PatchProblem {
    pub fn new(op: &AssembledOperator, space: &CoarseSpace, t: usize, k: usize, opts: SaddleOptions) -> Result<Self> {
        let n = op.n_nodes();
        let nc = op.n_comp();
        if n != space.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "element_corrector",
                expected: space.n_nodes(),
                got: n,
            });
        }
        let mesh = space.mesh();
        let patch = mesh.patch(t, k);
        let dir = space.dirichlet_mask();
        let mut nodes: Vec<usize> = patch
            .iter()
            .flat_map(|&e| space.element_nodes(e).iter().copied())
            .filter(|&x| !dir[x])
            .collect();
        nodes.sort_unstable();
        let unknowns: Vec<usize> = (0..nc).flat_map(|c| nodes.iter().map(move |&x| c * n + x)).collect();
        let a = op.matrix().principal_submatrix(&unknowns);

        // Functionals whose element lies in the patch; all others vanish on
        // patch-supported functions anyway.
        let mut in_patch = vec![false; mesh.num_elements()];
        for &e in &patch {
            in_patch[e] = true;
        }
        let interp = space.interp();
        let psi = interp.psi_free();
        let mut trips = Vec::new();
        let mut rows = 0;
        for j in 0..space.n_free() {
            if !in_patch[interp.assignment()[j]] {
                continue;
            }
            let (cols, vals) = psi.row(j);
            for c in 0..nc {
                let mut any = false;
                for (&x, &v) in cols.iter().zip(vals) {
                    if let Ok(l) = unknowns.binary_search(&(c * n + x)) {
                        trips.push((rows, l, v));
                        any = true;
                    }
                }
                if any {
                    rows += 1;
                }
            }
        }
        let cmat = CsrMatrix::from_triplets(rows, unknowns.len(), trips);
        let factor = SaddleFactor::new(&a, &cmat, opts).map_err(|e| tag_element(e, t))?;
        Ok(Self {
            element: t,
            unknowns,
            n_constraints: rows,
            factor,
        })
    }

    pub fn element(&self) -> usize {
        self.element
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn augmented(&self) -> bool {
        self.factor.augmentation() > 0.0
    }

    /// `K_T v` restricted to the patch unknowns; `v` is given entrywise.
    pub fn element_load(&self, op: &AssembledOperator, space: &CoarseSpace, v: impl Fn(usize) -> f64) -> Vec<f64> {
        let n = op.n_nodes();
        let nc = op.n_comp();
        let mut rhs = vec![0.0; self.unknowns.len()];
        let mut local = Vec::new();
        for &x in space.element_nodes(self.element) {
            let block = op.node_block(x);
            let ln = block.nodes.len();
            let m = ln * nc;
            local.clear();
            local.extend((0..m).map(|i| v((i / ln) * n + block.nodes[i % ln])));
            if local.iter().all(|&s| s == 0.0) {
                continue;
            }
            for i in 0..m {
                let g = (i / ln) * n + block.nodes[i % ln];
                let Ok(l) = self.unknowns.binary_search(&g) else {
                    continue;
                };
                let row = &block.values[i * m..(i + 1) * m];
                rhs[l] += row.iter().zip(&local).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        rhs
    }

    /// Solve for a local load; returns the corrector as a global sparse
    /// vector of length `len` and the relative residual.
    pub fn solve(&self, rhs: &[f64], len: usize) -> Result<(SparseVec, f64)> {
        let (x, _, report) = self.factor.solve(rhs, None).map_err(|e| tag_element(e, self.element))?;
        let entries = self
            .unknowns
            .iter()
            .zip(&x)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&g, &v)| (g, v))
            .collect();
        Ok((SparseVec { len, entries }, report.relative_residual))
    }
}

/// `Q_T^k v` for a full dof-vector `v`.
pub fn element_corrector(
    op: &AssembledOperator,
    space: &CoarseSpace,
    t: usize,
    v: &[f64],
    k: usize,
    opts: SaddleOptions,
) -> Result<SparseVec> {
    if v.len() != op.size() {
        return Err(Error::DimensionMismatch {
            context: "element_corrector",
            expected: op.size(),
            got: v.len(),
        });
    }
    let p = PatchProblem::new(op, space, t, k, opts)?;
    let rhs = p.element_load(op, space, |i| v[i]);
    Ok(p.solve(&rhs, v.len())?.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorrectorStats {
    pub patches: usize,
    pub solves: usize,
    pub max_patch_dofs: usize,
    pub max_constraints: usize,
    pub augmented_patches: usize,
    pub max_residual: f64,
}

/// Correctors `q_s = Σ_T Q_T^k (φ_j e_c)` for every free coarse dof
/// `s = c·m₀ + j`, optionally with the extended corrector of a lifting.
#[derive(Debug, Clone)]
pub struct CorrectorBasis {
    k: usize,
    n_comp: usize,
    n_free: usize,
    correctors: Vec<SparseVec>,
    lifting: Option<SparseVec>,
    stats: CorrectorStats,
}

impl CorrectorBasis {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_comp(&self) -> usize {
        self.n_comp
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Number of coarse dofs `n·m₀`.
    pub fn len(&self) -> usize {
        self.correctors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correctors.is_empty()
    }

    pub fn corrector(&self, s: usize) -> &SparseVec {
        &self.correctors[s]
    }

    pub fn correctors(&self) -> &[SparseVec] {
        &self.correctors
    }

    /// `Q̂^k g` when a lifting was supplied.
    pub fn lifting_corrector(&self) -> Option<&SparseVec> {
        self.lifting.as_ref()
    }

    pub fn stats(&self) -> &CorrectorStats {
        &self.stats
    }

    /// `φ_j e_c − q_s` as a dense vector.
    pub fn basis_function(&self, space: &CoarseSpace, s: usize) -> Vec<f64> {
        let n = space.n_nodes();
        let (c, j) = (s / self.n_free, s % self.n_free);
        let mut v = vec![0.0; self.n_comp * n];
        let phi = space.interp().phi_free();
        for x in 0..n {
            v[c * n + x] = phi.get(x, j);
        }
        self.correctors[s].add_to(-1.0, &mut v);
        v
    }

    /// Sparse `|dofs| × n·m₀` matrix whose columns are the corrected basis.
    pub fn basis_matrix(&self, space: &CoarseSpace) -> CsrMatrix {
        let n = space.n_nodes();
        let phi = space.interp().phi_free();
        let mut trips = Vec::new();
        for c in 0..self.n_comp {
            for (i, j, v) in phi.triplets() {
                trips.push((c * n + i, c * self.n_free + j, v));
            }
        }
        for (s, q) in self.correctors.iter().enumerate() {
            for &(i, v) in &q.entries {
                trips.push((i, s, -v));
            }
        }
        CsrMatrix::from_triplets(self.n_comp * n, self.correctors.len(), trips)
    }
}

/// Coarse dofs `c·m₀ + j` whose basis function meets the stencil of `T`.
fn element_sources(op: &AssembledOperator, space: &CoarseSpace, t: usize) -> Vec<usize> {
    let phi = space.interp().phi_free();
    let mut js = BTreeSet::new();
    for &x in space.element_nodes(t) {
        for &y in &op.node_block(x).nodes {
            js.extend(phi.row(y).0.iter().copied());
        }
    }
    let m0 = space.n_free();
    (0..op.n_comp()).flat_map(|c| js.iter().map(move |&j| c * m0 + j)).collect()
}

struct ElementResult {
    corrections: Vec<(usize, SparseVec)>,
    lifting: Option<SparseVec>,
    dofs: usize,
    constraints: usize,
    augmented: bool,
    max_residual: f64,
}

fn correct_element(
    op: &AssembledOperator,
    space: &CoarseSpace,
    t: usize,
    k: usize,
    lifting: Option<&[f64]>,
    opts: &CorrectorOptions,
) -> Result<ElementResult> {
    let sources = element_sources(op, space, t);
    let lifting_active = lifting.is_some_and(|g| space.element_nodes(t).iter().any(|&x| {
        op.node_block(x)
            .nodes
            .iter()
            .any(|&y| (0..op.n_comp()).any(|c| g[c * op.n_nodes() + y] != 0.0))
    }));
    if sources.is_empty() && !lifting_active {
        return Ok(ElementResult {
            corrections: Vec::new(),
            lifting: None,
            dofs: 0,
            constraints: 0,
            augmented: false,
            max_residual: 0.0,
        });
    }
    let p = PatchProblem::new(op, space, t, k, opts.saddle)?;
    let n = op.n_nodes();
    let m0 = space.n_free();
    let phi = space.interp().phi_free();
    let len = op.size();
    let mut max_residual: f64 = 0.0;
    let mut corrections = Vec::with_capacity(sources.len());
    for &s in &sources {
        let (c, j) = (s / m0, s % m0);
        let rhs = p.element_load(op, space, |i| if i / n == c { phi.get(i % n, j) } else { 0.0 });
        let (q, res) = p.solve(&rhs, len)?;
        max_residual = max_residual.max(res);
        corrections.push((s, q));
    }
    let lift = match lifting {
        Some(g) if lifting_active => {
            let rhs = p.element_load(op, space, |i| g[i]);
            let (q, res) = p.solve(&rhs, len)?;
            max_residual = max_residual.max(res);
            Some(q)
        }
        _ => None,
    };
    Ok(ElementResult {
        corrections,
        lifting: lift,
        dofs: p.unknowns.len(),
        constraints: p.n_constraints,
        augmented: p.augmented(),
        max_residual,
    })
}

/// Sum the element correctors of all coarse basis functions (and of the
/// lifting `g`, if given). Work is spread over elements in parallel and
/// merged in element order, so the result does not depend on the thread
/// count.
pub fn build_corrector_basis(
    op: &AssembledOperator,
    space: &CoarseSpace,
    k: usize,
    lifting: Option<&[f64]>,
    opts: &CorrectorOptions,
) -> Result<CorrectorBasis> {
    if k == 0 {
        return Err(Error::InvalidInput("localization parameter k must be at least 1".into()));
    }
    if let Some(g) = lifting {
        if g.len() != op.size() {
            return Err(Error::DimensionMismatch {
                context: "dirichlet_lifting",
                expected: op.size(),
                got: g.len(),
            });
        }
    }
    let len = op.size();
    let nc = op.n_comp();
    let m0 = space.n_free();
    let mut correctors = vec![SparseVec::new(len); nc * m0];
    let mut lift = lifting.map(|_| SparseVec::new(len));
    let mut stats = CorrectorStats::default();
    let elements: Vec<usize> = (0..space.mesh().num_elements()).collect();
    for batch in elements.chunks(opts.batch.max(1)) {
        let results: Vec<Result<ElementResult>> = batch
            .par_iter()
            .map(|&t| correct_element(op, space, t, k, lifting, opts))
            .collect();
        for r in results {
            let r = r?;
            if r.dofs == 0 {
                continue;
            }
            stats.patches += 1;
            stats.solves += r.corrections.len() + usize::from(r.lifting.is_some());
            stats.max_patch_dofs = stats.max_patch_dofs.max(r.dofs);
            stats.max_constraints = stats.max_constraints.max(r.constraints);
            stats.augmented_patches += usize::from(r.augmented);
            stats.max_residual = stats.max_residual.max(r.max_residual);
            for (s, q) in &r.corrections {
                correctors[*s].merge_add(q);
            }
            if let (Some(acc), Some(q)) = (lift.as_mut(), r.lifting.as_ref()) {
                acc.merge_add(q);
            }
        }
    }
    Ok(CorrectorBasis {
        k,
        n_comp: nc,
        n_free: m0,
        correctors,
        lifting: lift,
        stats,
    })
}
