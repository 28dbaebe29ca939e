//! Smallest eigenpairs of `A v = λ M v` with `A` symmetric PSD and `M`
//! diagonal positive, by block inverse (subspace) iteration with a shifted
//! sparse factorization and Rayleigh–Ritz extraction.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SparseCholesky;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const MAX_BLOCK: usize = 4;
const MAX_ITER: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenTarget {
    /// Smallest eigenvalue on the M-orthogonal complement of the constants.
    SecondSmallest,
    /// Smallest eigenvalue without deflation (Dirichlet nodes already removed).
    SmallestDirichlet,
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// M-normalized eigenvector.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `‖Av − λMv‖_{M⁻¹}` for the returned pair.
    pub residual: f64,
}

struct Space<'a> {
    m: &'a [f64],
    /// M-normalized constant vector, when deflating.
    constant: Option<Vec<f64>>,
}

impl Space<'_> {
    fn m_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(self.m).map(|((x, y), w)| x * y * w).sum()
    }

    fn deflate(&self, v: &mut [f64]) {
        if let Some(c) = &self.constant {
            let s = self.m_dot(c, v);
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= s * ci;
            }
        }
    }

    /// Modified Gram–Schmidt (two passes) in the M inner product. Columns
    /// that collapse are replaced by fresh random vectors.
    fn orthonormalize(&self, block: &mut [Vec<f64>], rng: &mut ChaCha8Rng) {
        for j in 0..block.len() {
            for attempt in 0..4 {
                let before = self.m_dot(&block[j], &block[j]).sqrt();
                for _ in 0..2 {
                    self.deflate(&mut block[j]);
                    for i in 0..j {
                        let (done, rest) = block.split_at_mut(j);
                        let s = self.m_dot(&done[i], &rest[0]);
                        for (v, u) in rest[0].iter_mut().zip(&done[i]) {
                            *v -= s * u;
                        }
                    }
                }
                let norm = self.m_dot(&block[j], &block[j]).sqrt();
                if norm > 1e-10 * before && norm > 0.0 {
                    block[j].iter_mut().for_each(|v| *v /= norm);
                    break;
                }
                if attempt == 3 {
                    block[j].iter_mut().for_each(|v| *v = 0.0);
                    break;
                }
                block[j] = random_vec(block[j].len(), rng);
            }
        }
    }
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Smallest (optionally deflated) generalized eigenpair. `tol` bounds the
/// relative change of the Rayleigh quotient between iterations.
pub fn generalized_eig_smallest(
    a: &CsrMatrix,
    m_diag: &[f64],
    target: EigenTarget,
    tol: f64,
) -> Result<EigenResult> {
    let n = a.nrows();
    if m_diag.len() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "generalized_eig_smallest",
            expected: n,
            got: m_diag.len(),
        });
    }
    if m_diag.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidInput("generalized_eig_smallest: mass must be positive".into()));
    }
    let deflate = target == EigenTarget::SecondSmallest;
    let avail = if deflate { n.saturating_sub(1) } else { n };
    if avail == 0 {
        return Err(Error::InvalidInput(
            "generalized_eig_smallest: subgraph too small for the requested eigenvalue".into(),
        ));
    }
    let trace_a: f64 = a.diagonal().iter().sum();
    let trace_m: f64 = m_diag.iter().sum();
    let scale = trace_a / trace_m;
    if !(scale > 0.0) {
        return Err(Error::Disconnected { lambda: 0.0 });
    }
    let sigma = 1e-8 * scale;
    let shifted = a.add(&CsrMatrix::from_diagonal(
        &m_diag.iter().map(|w| sigma * w).collect::<Vec<_>>(),
    ));
    let chol = SparseCholesky::factor(&shifted)?;

    let constant = deflate.then(|| {
        let c = 1.0 / trace_m.sqrt();
        vec![c; n]
    });
    let space = Space { m: m_diag, constant };
    let p = avail.min(MAX_BLOCK);
    let mut rng = ChaCha8Rng::seed_from_u64(0xe16e);
    let mut block: Vec<Vec<f64>> = (0..p).map(|_| random_vec(n, &mut rng)).collect();
    space.orthonormalize(&mut block, &mut rng);

    let mut theta_prev = f64::INFINITY;
    for it in 1..=MAX_ITER {
        for v in block.iter_mut() {
            let mv: Vec<f64> = v.iter().zip(m_diag).map(|(x, w)| x * w).collect();
            *v = chol.solve(&mv);
        }
        space.orthonormalize(&mut block, &mut rng);

        // Rayleigh–Ritz on span(block); block is M-orthonormal.
        let av: Vec<Vec<f64>> = block.iter().map(|v| a.mul_vec(v)).collect();
        let g = DMatrix::from_fn(p, p, |i, j| {
            0.5 * (crate::sparse::dot(&block[i], &av[j]) + crate::sparse::dot(&block[j], &av[i]))
        });
        let eig = g.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let rotated: Vec<Vec<f64>> = order
            .iter()
            .map(|&c| {
                let mut x = vec![0.0; n];
                for (k, v) in block.iter().enumerate() {
                    let w = eig.eigenvectors[(k, c)];
                    for (xi, vi) in x.iter_mut().zip(v) {
                        *xi += w * vi;
                    }
                }
                x
            })
            .collect();
        block = rotated;
        let theta = eig.eigenvalues[order[0]];

        let x = &block[0];
        let ax = a.mul_vec(x);
        let residual = ax
            .iter()
            .zip(x)
            .zip(m_diag)
            .map(|((axi, xi), w)| {
                let r = axi - theta * w * xi;
                r * r / w
            })
            .sum::<f64>()
            .sqrt();

        if it >= 2 && theta <= 1e-10 * scale {
            return Err(Error::Disconnected { lambda: theta });
        }
        let rel_change = (theta - theta_prev).abs() / theta.abs();
        if it >= 2 && rel_change <= tol && residual <= tol.sqrt() * theta {
            let mut vector = block.swap_remove(0);
            space.deflate(&mut vector);
            let nrm = space.m_dot(&vector, &vector).sqrt();
            vector.iter_mut().for_each(|v| *v /= nrm);
            return Ok(EigenResult {
                lambda: theta,
                vector,
                iterations: it,
                residual,
            });
        }
        theta_prev = theta;
    }
    Err(Error::NotConverged {
        context: "generalized_eig_smallest",
        iterations: MAX_ITER,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense oracle: eigenvalues of M^{-1/2} A M^{-1/2}.
    fn dense_eigs(a: &CsrMatrix, m: &[f64]) -> Vec<f64> {
        let d = a.to_dense();
        let n = m.len();
        let s = DMatrix::from_fn(n, n, |i, j| d[(i, j)] / (m[i] * m[j]).sqrt());
        let mut e: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> (CsrMatrix, Vec<f64>) {
        let mut t = Vec::new();
        let mut m = vec![0.0; n];
        for &(i, j, len) in edges {
            let w = 1.0 / len;
            t.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
            m[i] += 0.5 * len;
            m[j] += 0.5 * len;
        }
        (CsrMatrix::from_triplets(n, n, t), m)
    }

    #[test]
    fn path_graph_matches_dense() {
        let (a, m) = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let r = generalized_eig_smallest(&a, &m, EigenTarget::SecondSmallest, 1e-12).unwrap();
        let e = dense_eigs(&a, &m);
        assert!((r.lambda - e[1]).abs() <= 1e-8 * e[1]);
        let c: f64 = r.vector.iter().zip(&m).map(|(v, w)| v * w).sum();
        assert!(c.abs() < 1e-10);
    }

    #[test]
    fn complete_graph_matches_dense() {
        let edges: Vec<_> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j, 1.0)))
            .collect();
        let (a, m) = graph(4, &edges);
        let r = generalized_eig_smallest(&a, &m, EigenTarget::SecondSmallest, 1e-12).unwrap();
        let e = dense_eigs(&a, &m);
        assert!((r.lambda - e[1]).abs() <= 1e-8 * e[1]);
    }

    #[test]
    fn longer_path_matches_dense() {
        let edges: Vec<_> = (0..39).map(|i| (i, i + 1, 0.5 + 0.01 * i as f64)).collect();
        let (a, m) = graph(40, &edges);
        let r = generalized_eig_smallest(&a, &m, EigenTarget::SecondSmallest, 1e-12).unwrap();
        let e = dense_eigs(&a, &m);
        assert!((r.lambda - e[1]).abs() <= 1e-8 * e[1]);
    }

    #[test]
    fn disconnected_is_flagged() {
        let (a, m) = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let r = generalized_eig_smallest(&a, &m, EigenTarget::SecondSmallest, 1e-12);
        assert!(matches!(r, Err(Error::Disconnected { .. })));
    }

    #[test]
    fn dirichlet_mode_matches_dense() {
        // Path 0-1-2-3 with node 0 removed (grounded through its edge).
        let (full, mfull) = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        let a = full.principal_submatrix(&[1, 2, 3]);
        let m = mfull[1..].to_vec();
        let r = generalized_eig_smallest(&a, &m, EigenTarget::SmallestDirichlet, 1e-12).unwrap();
        let e = dense_eigs(&a, &m);
        assert!((r.lambda - e[0]).abs() <= 1e-8 * e[0]);
    }
}
