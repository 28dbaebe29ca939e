mod common;

use common::{norm, random_vec, sub};
use nalgebra::{DMatrix, DVector};
use netlod_core::solvers::{
    cg_solve, generalized_eig_smallest, saddle_solve, CgOptions, EigenTarget, SaddleOptions, SparseCholesky,
};
use netlod_core::sparse::{CsrMatrix, Triplet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Weighted graph Laplacian of a random connected graph plus `shift·I`.
fn random_laplacian(n: usize, seed: u64, shift: f64) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: Vec<Triplet> = Vec::new();
    let edge = |i: usize, j: usize, w: f64, t: &mut Vec<Triplet>| {
        t.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
    };
    for i in 1..n {
        let j = rng.random_range(0..i);
        edge(i, j, rng.random_range(0.1..2.0), &mut t);
    }
    for _ in 0..2 * n {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j {
            edge(i, j, rng.random_range(0.1..2.0), &mut t);
        }
    }
    t.extend((0..n).map(|i| (i, i, shift)));
    CsrMatrix::from_triplets(n, n, t)
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / norm(b)
}

proptest! {
    #![proptest_config(common::cases(32))]

    #[test]
    fn cholesky_matches_dense(n in 2usize..80, seed in 0u64..10_000) {
        let a = random_laplacian(n, seed, 0.05);
        let b = random_vec(n, seed);
        let x = SparseCholesky::factor(&a).unwrap().solve(&b);
        let dense = a.to_dense().cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
        prop_assert!(rel(&x, dense.as_slice()) <= 1e-10);
    }

    #[test]
    fn pcg_matches_direct(n in 2usize..120, seed in 0u64..10_000) {
        let a = random_laplacian(n, seed, 0.01);
        let b = random_vec(n, seed + 1);
        let direct = SparseCholesky::factor(&a).unwrap().solve(&b);
        let opts = CgOptions { tol: 1e-12, ..Default::default() };
        let (x, report) = cg_solve(&a, &b, None, &opts).unwrap();
        let recomputed = norm(&sub(&a.mul_vec(&x), &b)) / norm(&b);
        prop_assert!(report.relative_residual <= 1e-12);
        prop_assert!((report.relative_residual - recomputed).abs() <= 1e-15);
        prop_assert!(rel(&x, &direct) <= 1e-8);
    }

    #[test]
    fn second_eigenvalue_matches_dense(n in 3usize..40, seed in 0u64..10_000) {
        let a = random_laplacian(n, seed, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let r = generalized_eig_smallest(&a, &m, EigenTarget::SecondSmallest, 1e-13).unwrap();
        // M^{-1/2} A M^{-1/2} has the same spectrum.
        let s = DMatrix::from_fn(n, n, |i, j| a.get(i, j) / (m[i] * m[j]).sqrt());
        let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        prop_assert!((r.lambda - ev[1]).abs() <= 1e-8 * ev[1], "{} vs {}", r.lambda, ev[1]);
        let c: f64 = r.vector.iter().zip(&m).map(|(v, w)| v * w).sum();
        prop_assert!(c.abs() <= 1e-10);
    }

    #[test]
    fn saddle_matches_null_space_solve(n in 6usize..50, rows in 1usize..5, seed in 0u64..10_000) {
        // Semidefinite block: the constraints must remove its kernel.
        let a = random_laplacian(n, seed, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cd = DMatrix::from_fn(rows, n, |i, _| if i == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let c = CsrMatrix::from_dense(&cd);
        let b = random_vec(n, seed + 2);
        let (x, _, _) = saddle_solve(&a, &c, &b, SaddleOptions::default()).unwrap();

        // Null space of C from a complete QR of Cᵀ.
        let qr = cd.transpose().insert_columns(rows, n - rows, 0.0).qr();
        let q = qr.q();
        let z = q.columns(rows, n - rows).clone_owned();
        let ad = a.to_dense();
        let y = (z.transpose() * &ad * &z).cholesky().unwrap().solve(&(z.transpose() * DVector::from_vec(b.clone())));
        let expected = &z * y;
        prop_assert!(rel(&x, expected.as_slice()) <= 1e-8);
        prop_assert!(norm(&c.mul_vec(&x)) <= 1e-10 * norm(&x));
    }
}
