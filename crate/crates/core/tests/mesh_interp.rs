mod common;

use common::{clamped, generated, grid, norm, random_vec, space, sub};
use netlod_core::lod::{IdealOracle, DEFAULT_ORACLE_CAP};
use netlod_core::mesh::CoarseMesh;
use netlod_core::operators::{assemble_heat, assemble_laplacian, assemble_mass, EdgeCoefficients};
use proptest::prelude::*;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Half-open box test written out independently of `CoarseMesh::locate`.
fn owns(mesh: &CoarseMesh, e: usize, p: &[f64]) -> bool {
    let c = mesh.element_lattice(e);
    let h = mesh.h();
    (0..mesh.dim()).all(|a| {
        let lo = c[a] as f64 * h;
        let hi = lo + h;
        let top = c[a] + 1 == mesh.elements_per_axis()[a];
        p[a] >= lo && (p[a] < hi || (top && p[a] <= hi))
    })
}

proptest! {
    #![proptest_config(common::cases(64))]

    #[test]
    fn points_on_faces_have_one_owner(n in 1usize..9, i in 0usize..9, j in 0usize..9, t in 0.0f64..1.0, axis in 0usize..2) {
        let h = 1.0 / n as f64;
        let mesh = CoarseMesh::new(&[1.0, 1.0], h, &[], None, false).unwrap();
        let (i, j) = (i % (n + 1), j % n);
        // A point on the lattice line `axis = i·h`.
        let mut p = vec![0.0; 2];
        p[axis] = i as f64 * h;
        p[1 - axis] = (j as f64 + t) * h;
        let owners: Vec<usize> = (0..mesh.num_elements()).filter(|&e| owns(&mesh, e, &p)).collect();
        prop_assert_eq!(owners.len(), 1);
        prop_assert_eq!(mesh.locate(&p).unwrap(), owners[0]);
    }

    #[test]
    fn patches_are_symmetric_and_compose(n in 1usize..9, e in 0usize..64, f in 0usize..64, a in 0usize..4, b in 0usize..4) {
        let mesh = CoarseMesh::new(&[1.0, 1.0], 1.0 / n as f64, &[], None, false).unwrap();
        let (e, f) = (e % mesh.num_elements(), f % mesh.num_elements());
        prop_assert_eq!(mesh.patch(e, a).contains(&f), mesh.patch(f, a).contains(&e));
        prop_assert_eq!(mesh.patch_of(&mesh.patch(e, a), b), mesh.patch(e, a + b));
    }

    #[test]
    fn partition_and_partition_of_unity(seed in 0u64..1000, n in 1usize..5) {
        let net = grid(8, 0.45, seed);
        let mesh = CoarseMesh::new(&[1.0, 1.0], 1.0 / n as f64, &[], None, false).unwrap();
        let parts = mesh.partition(&net).unwrap();
        let mut seen = vec![0usize; net.num_nodes()];
        for (e, p) in parts.iter().enumerate() {
            for &x in p {
                seen[x] += 1;
                prop_assert!(owns(&mesh, e, net.coords(x)));
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let phi = mesh.basis_matrix(&net).unwrap();
        let ones = phi.mul_vec(&vec![1.0; mesh.num_nodes()]);
        prop_assert!(ones.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn interpolation_is_a_local_projection(seed in 0u64..1000) {
        let net = clamped(grid(16, 0.4, seed));
        let sp = space(&net, 0.25);
        let interp = sp.interp();
        prop_assert!(interp.duality_error() <= 1e-10);

        let v = random_vec(net.num_nodes(), seed);
        let iv = interp.interpolate(&v).unwrap();
        let iiv = interp.interpolate(&iv).unwrap();
        prop_assert!(max_abs(&sub(&iiv, &iv)) <= 1e-10 * max_abs(&iv));

        // Free coarse basis functions are reproduced.
        let phi = interp.phi_free();
        for j in 0..interp.n_free() {
            let pj: Vec<f64> = (0..net.num_nodes()).map(|x| phi.get(x, j)).collect();
            prop_assert!(max_abs(&sub(&interp.interpolate(&pj).unwrap(), &pj)) <= 1e-10);
        }

        // Functional k only reads v on the nodes of its assignment element.
        let dofs = interp.coarse_dofs(&v).unwrap();
        let k = (seed as usize) % interp.n_free();
        let inside = sp.element_nodes(interp.assignment()[k]);
        let mut w = random_vec(net.num_nodes(), seed + 1);
        for &x in inside {
            w[x] = v[x];
        }
        prop_assert_eq!(interp.coarse_dofs(&w).unwrap()[k], dofs[k]);
    }

    #[test]
    fn product_rule_inequality(seed in 0u64..1000, smooth in any::<bool>()) {
        let net = clamped(generated(150.0, seed));
        let h = 0.25;
        let sp = space(&net, h);
        let l = assemble_laplacian(&net);
        let m = assemble_mass(&net).diagonal();
        let n = net.num_nodes();
        let v: Vec<f64> = if smooth {
            let a = random_vec(3, seed);
            (0..n).map(|x| {
                let p = net.coords(x);
                a[0] + (7.0 * a[1] * p[0]).sin() + a[2] * p[1]
            }).collect()
        } else {
            random_vec(n, seed)
        };
        let phi = sp.interp().phi();
        for k in 0..sp.mesh().num_nodes() {
            let vk: Vec<f64> = (0..n).map(|x| phi.get(x, k) * v[x]).collect();
            for t in sp.mesh().node_elements(k) {
                let nodes = sp.element_nodes(t);
                let lhs = l.quad_form_region(&vk, nodes);
                let mv: f64 = nodes.iter().map(|&x| m[x] * v[x] * v[x]).sum();
                let rhs = 2.0 * (mv / (h * h) + l.quad_form_region(&v, nodes));
                prop_assert!(lhs <= rhs * (1.0 + 1e-12), "k {k}, element {t}: {lhs} > {rhs}");
            }
        }
    }
}

#[test]
fn interpolation_vanishes_on_fine_space() {
    let net = clamped(grid(10, 0.4, 3));
    let sp = space(&net, 0.25);
    let coeffs = EdgeCoefficients::random_range(&net, 0.1, 1.0, 3).unwrap();
    let op = assemble_heat(&net, &coeffs).unwrap();
    let oracle = IdealOracle::new(&op, &sp, DEFAULT_ORACLE_CAP).unwrap();
    assert!(oracle.fine_dim() > 0);
    for i in 0..oracle.fine_dim() {
        let w = oracle.fine_basis_vector(i);
        assert!(max_abs(&sp.interp().coarse_dofs(&w).unwrap()) <= 1e-12 * max_abs(&w));
        assert!(max_abs(&sp.interp().interpolate(&w).unwrap()) <= 1e-12 * max_abs(&w));
    }
}

#[test]
fn constant_is_reproduced_without_dirichlet_nodes() {
    let net = grid(12, 0.4, 5);
    let sp = space(&net, 0.25);
    let one = vec![1.0; net.num_nodes()];
    let i1 = sp.interp().interpolate(&one).unwrap();
    assert!(norm(&sub(&i1, &one)) <= 1e-10 * norm(&one));
}

/// `(H⁻¹|v − 𝓘v|_{M,T} + |𝓘v|_{L,T}) / |v|_{L,U₃(T)}` maximized over elements
/// and smooth random fields must not grow with refinement.
#[test]
fn local_interpolation_bound_does_not_grow() {
    let net = clamped(generated(1000.0, 1));
    let l = assemble_laplacian(&net);
    let m = assemble_mass(&net).diagonal();
    let n = net.num_nodes();
    let fields: Vec<Vec<f64>> = (0..10)
        .map(|s| {
            let a = random_vec(9, 100 + s);
            (0..n)
                .map(|x| {
                    let p = net.coords(x);
                    let mut v = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            let (fi, fj) = ((i + 1) as f64, (j + 1) as f64);
                            v += a[3 * i + j] * (fi * std::f64::consts::PI * p[0]).sin()
                                * (fj * std::f64::consts::PI * p[1]).sin();
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();

    let mut ratios = Vec::new();
    for h in [0.25, 0.125, 0.0625] {
        let sp = space(&net, h);
        let mut worst: f64 = 0.0;
        for v in &fields {
            let iv = sp.interp().interpolate(v).unwrap();
            let r = sub(v, &iv);
            // Per-node energies so that patch sums are cheap.
            let lv: Vec<f64> = (0..n).map(|x| l.quad_form_region(v, &[x])).collect();
            let liv: Vec<f64> = (0..n).map(|x| l.quad_form_region(&iv, &[x])).collect();
            for t in 0..sp.mesh().num_elements() {
                let nodes = sp.element_nodes(t);
                let mr: f64 = nodes.iter().map(|&x| m[x] * r[x] * r[x]).sum();
                let li: f64 = nodes.iter().map(|&x| liv[x]).sum();
                let patch: f64 = sp
                    .mesh()
                    .patch(t, 3)
                    .iter()
                    .flat_map(|&e| sp.element_nodes(e))
                    .map(|&x| lv[x])
                    .sum();
                if patch > 0.0 {
                    worst = worst.max((mr.sqrt() / h + li.sqrt()) / patch.sqrt());
                }
            }
        }
        ratios.push(worst);
    }
    eprintln!("local interpolation ratios {ratios:?}");
    for j in 1..ratios.len() {
        assert!(ratios[j] <= 1.5 * ratios[0], "ratios {ratios:?}");
    }
}
