mod common;

use common::{generated, grid, norm, random_vec};
use netlod_core::operators::{
    assemble_fiber, assemble_fiber2d, assemble_heat, assemble_laplacian, assemble_mass, assemble_spring,
    EdgeCoefficients, FiberParams, TriplePolicy,
};
use netlod_core::SpatialNetwork;
use proptest::prelude::*;

fn kernel_residual(k: &netlod_core::sparse::CsrMatrix, v: &[f64]) -> f64 {
    norm(&k.mul_vec(v)) / (k.max_abs() * norm(v))
}

/// Component-major field from a per-node function.
fn field(net: &SpatialNetwork, n_comp: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let n = net.num_nodes();
    let mut v = vec![0.0; n * n_comp];
    for x in 0..n {
        let val = f(net.coords(x));
        for c in 0..n_comp {
            v[c * n + x] = val[c];
        }
    }
    v
}

fn network(kind: u8, seed: u64) -> SpatialNetwork {
    match kind {
        0 => grid(6, 0.4, seed),
        _ => generated(60.0, seed),
    }
}

proptest! {
    #![proptest_config(common::cases(12))]

    #[test]
    fn laplacian_annihilates_constants(kind in 0u8..2, seed in 0u64..1000, c in -5.0f64..5.0) {
        let net = network(kind, seed);
        let l = assemble_laplacian(&net);
        let coeffs = EdgeCoefficients::random_range(&net, 0.1, 1.0, seed).unwrap();
        let h = assemble_heat(&net, &coeffs).unwrap();
        let one = vec![c + 10.0; net.num_nodes()];
        prop_assert!(kernel_residual(l.matrix(), &one) <= 1e-12);
        prop_assert!(kernel_residual(h.matrix(), &one) <= 1e-12);
    }

    #[test]
    fn spring_annihilates_rigid_motions(kind in 0u8..2, seed in 0u64..1000, t in prop::array::uniform3(-1.0f64..1.0)) {
        let net = network(kind, seed);
        let k = assemble_spring(&net, &EdgeCoefficients::random_range(&net, 0.5, 2.0, seed).unwrap()).unwrap();
        let translation = field(&net, 2, |_| vec![t[0], t[1]]);
        let rotation = field(&net, 2, |p| vec![-t[2] * (p[1] - 0.5), t[2] * (p[0] - 0.5)]);
        prop_assert!(kernel_residual(k.matrix(), &translation) <= 1e-12);
        if t[2].abs() > 1e-3 {
            prop_assert!(kernel_residual(k.matrix(), &rotation) <= 1e-12);
        }
    }

    #[test]
    fn assembled_operators_are_symmetric_psd_and_reassemble(kind in 0u8..2, seed in 0u64..1000) {
        let net = network(kind, seed);
        let fiber = EdgeCoefficients::fiber(&net, FiberParams::default()).unwrap();
        let ops = vec![
            assemble_mass(&net),
            assemble_heat(&net, &EdgeCoefficients::random_range(&net, 0.1, 1.0, seed).unwrap()).unwrap(),
            assemble_spring(&net, &EdgeCoefficients::uniform(&net, 1.0).unwrap()).unwrap(),
            assemble_fiber2d(&net, &fiber, TriplePolicy::AllPairs).unwrap(),
            assemble_fiber(&net, &fiber, TriplePolicy::AllPairs).unwrap(),
        ];
        for op in &ops {
            let scale = op.matrix().max_abs();
            prop_assert!(op.matrix().asymmetry() <= 1e-14 * scale);
            prop_assert!(op.reassembly_error() <= 1e-12 * scale);
            let v = random_vec(op.size(), seed ^ 0xabc);
            let q = op.matrix().quad_form(&v);
            let all: Vec<usize> = (0..net.num_nodes()).collect();
            let blocks = op.quad_form_region(&v, &all);
            prop_assert!(q >= -1e-12 * scale * norm(&v).powi(2));
            prop_assert!((q - blocks).abs() <= 1e-10 * scale * norm(&v).powi(2));
        }
    }

    #[test]
    fn bending_vanishes_on_affine_fields_over_collinear_triples(seed in 0u64..1000, a in prop::array::uniform8(-1.0f64..1.0)) {
        // Straight grid lines: every retained triple is exactly collinear.
        let net = grid(5, 0.0, seed);
        let policy = TriplePolicy::CollinearOnly { max_angle_deg: 1.0 };
        let coeffs = EdgeCoefficients::fiber(&net, FiberParams::default()).unwrap();
        let full = assemble_fiber(&net, &coeffs, policy).unwrap();
        let spring = assemble_spring(&net, &coeffs).unwrap();
        let n = net.num_nodes();
        let u = field(&net, 3, |p| vec![
            a[0] * p[0] + a[1] * p[1] + a[6],
            a[2] * p[0] + a[3] * p[1] + a[7],
            a[4] * p[0] + a[5] * p[1],
        ]);
        let in_plane: Vec<f64> = u[..2 * n].to_vec();
        let bending = full.matrix().quad_form(&u) - spring.matrix().quad_form(&in_plane);
        let scale = full.matrix().max_abs() * norm(&u).powi(2);
        prop_assert!(bending.abs() <= 1e-12 * scale, "bending energy {bending:e}");

        let full2 = assemble_fiber2d(&net, &coeffs, policy).unwrap();
        let bending2 = full2.matrix().quad_form(&in_plane) - spring.matrix().quad_form(&in_plane);
        prop_assert!(bending2.abs() <= 1e-12 * full2.matrix().max_abs() * norm(&in_plane).powi(2));
    }

    #[test]
    fn mass_of_constant_is_total_length(kind in 0u8..2, seed in 0u64..1000) {
        let net = network(kind, seed);
        let m = assemble_mass(&net).diagonal();
        let total: f64 = m.iter().sum();
        prop_assert!((total - net.total_length()).abs() <= 1e-12 * total);
    }
}

#[test]
fn bending_does_not_vanish_on_curved_fields() {
    let net = grid(5, 0.0, 0);
    let coeffs = EdgeCoefficients::fiber(&net, FiberParams::default()).unwrap();
    let full = assemble_fiber2d(&net, &coeffs, TriplePolicy::AllPairs).unwrap();
    let spring = assemble_spring(&net, &coeffs).unwrap();
    let u = field(&net, 2, |p| vec![0.0, p[0] * p[0]]);
    let bending = full.matrix().quad_form(&u) - spring.matrix().quad_form(&u);
    assert!(bending > 1e-6 * full.matrix().max_abs() * norm(&u).powi(2));
}
