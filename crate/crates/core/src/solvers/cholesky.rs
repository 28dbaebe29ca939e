//! Sparse Cholesky factorization `P A Pᵀ = L Lᵀ` (up-looking, row by row).
//!
//! The symbolic phase computes the elimination tree and column counts from
//! row patterns (`ereach`), the numeric phase fills `L` column-compressed.

use crate::error::{Error, Result};
use crate::solvers::ordering::nested_dissection;
use crate::sparse::CsrMatrix;

/// Pivots below this fraction of the original diagonal entry are treated as
/// zero, which catches semidefinite input (e.g. a Laplacian without Dirichlet
/// nodes) instead of returning a huge roundoff-driven solution.
const PIVOT_REL_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCholesky {
    /// Factor with a nested-dissection ordering.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm = nested_dissection(a);
        Self::factor_with_perm(a, perm)
    }

    pub fn factor_with_perm(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "cholesky",
                expected: n,
                got: a.ncols(),
            });
        }
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        // Lower triangle of the permuted matrix, stored by rows.
        let mut low_ptr = vec![0usize; n + 1];
        for old_r in 0..n {
            let r = pinv[old_r];
            let (cols, _) = a.row(old_r);
            low_ptr[r + 1] = cols.iter().filter(|&&c| pinv[c] <= r).count();
        }
        for i in 0..n {
            low_ptr[i + 1] += low_ptr[i];
        }
        let mut low_idx = vec![0usize; low_ptr[n]];
        let mut low_val = vec![0.0; low_ptr[n]];
        let mut fill = low_ptr.clone();
        for old_r in 0..n {
            let r = pinv[old_r];
            let (cols, vals) = a.row(old_r);
            for (&c, &v) in cols.iter().zip(vals) {
                let pc = pinv[c];
                if pc <= r {
                    low_idx[fill[r]] = pc;
                    low_val[fill[r]] = v;
                    fill[r] += 1;
                }
            }
        }

        // Elimination tree (Liu) with path-compressed ancestors.
        let mut parent = vec![usize::MAX; n];
        let mut ancestor = vec![usize::MAX; n];
        for k in 0..n {
            for &i0 in &low_idx[low_ptr[k]..low_ptr[k + 1]] {
                let mut i = i0;
                while i != usize::MAX && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == usize::MAX {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        let mut mark = vec![usize::MAX; n];
        let mut stack = Vec::with_capacity(n);
        let mut pattern = Vec::with_capacity(n);

        // Column counts.
        let mut counts = vec![1usize; n];
        for k in 0..n {
            ereach(k, &low_idx[low_ptr[k]..low_ptr[k + 1]], &parent, &mut mark, &mut stack, &mut pattern);
            for &i in &pattern {
                counts[i] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut next = col_ptr.clone();
        mark.iter_mut().for_each(|m| *m = usize::MAX);

        let mut x = vec![0.0; n];
        for k in 0..n {
            ereach(k, &low_idx[low_ptr[k]..low_ptr[k + 1]], &parent, &mut mark, &mut stack, &mut pattern);
            let mut akk = 0.0;
            for p in low_ptr[k]..low_ptr[k + 1] {
                x[low_idx[p]] += low_val[p];
                if low_idx[p] == k {
                    akk += low_val[p];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &pattern {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > PIVOT_REL_TOL * akk.abs()) || !d.is_finite() {
                return Err(Error::Singular {
                    context: "cholesky",
                    detail: format!("pivot {d:.3e} at permuted row {k} (original row {})", perm[k]),
                });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }

        Ok(Self {
            n,
            perm,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_factor(&self) -> usize {
        self.values.len()
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let x = self.solve(b);
        b.copy_from_slice(&x);
    }

    fn solve_permuted_in_place(&self, y: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let p0 = self.col_ptr[j];
            y[j] /= self.values[p0];
            let yj = y[j];
            for p in p0 + 1..self.col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let p0 = self.col_ptr[j];
            let mut s = y[j];
            for p in p0 + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = s / self.values[p0];
        }
    }
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), in
/// topological order of the elimination tree.
fn ereach(
    k: usize,
    row: &[usize],
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut Vec<usize>,
    pattern: &mut Vec<usize>,
) {
    pattern.clear();
    mark[k] = k;
    for &i0 in row {
        if i0 >= k {
            continue;
        }
        stack.clear();
        let mut i = i0;
        while mark[i] != k {
            stack.push(i);
            mark[i] = k;
            i = parent[i];
        }
        pattern.extend_from_slice(stack);
    }
    // Descendants in the elimination tree have smaller indices, so ascending
    // order is a valid topological order.
    pattern.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 1.0));
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j != i {
                    let w: f64 = rng.random_range(0.1..1.0);
                    t.push((i, i, w));
                    t.push((j, j, w));
                    t.push((i, j, -w));
                    t.push((j, i, -w));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn matches_dense_solve() {
        let a = random_spd(300, 3);
        let chol = SparseCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..300).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x = chol.solve(&b);
        let dense = a.to_dense();
        let xd = dense.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
        for i in 0..300 {
            assert!((x[i] - xd[i]).abs() < 1e-10 * (1.0 + xd[i].abs()));
        }
    }

    #[test]
    fn two_by_two() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let x = SparseCholesky::factor(&a).unwrap().solve(&[1.0, 0.0]);
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((x[1] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_singular_laplacian() {
        let t = vec![
            (0, 0, 1.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (1, 1, 2.0),
            (1, 2, -1.0),
            (2, 1, -1.0),
            (2, 2, 1.0),
        ];
        let a = CsrMatrix::from_triplets(3, 3, t);
        assert!(matches!(SparseCholesky::factor(&a), Err(Error::Singular { .. })));
    }
}
