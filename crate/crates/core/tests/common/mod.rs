#![allow(dead_code)]

use netlod_core::lod::CoarseSpace;
use netlod_core::mesh::CoarseMesh;
use netlod_core::netgen::{generate_fiber_network, tag_dirichlet_nodes, Face, GenTarget, GeneratorConfig};
use netlod_core::operators::assemble_mass;
use netlod_core::SpatialNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unit-square grid with `n` cells per side and one diagonal per cell;
/// interior nodes are moved by up to `jitter·h` in each direction.
pub fn grid(n: usize, jitter: f64, seed: u64) -> SpatialNetwork {
    let h = 1.0 / n as f64;
    let id = |i: usize, j: usize| i + (n + 1) * j;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let mut p = vec![i as f64 * h, j as f64 * h];
            if i > 0 && i < n && j > 0 && j < n && jitter > 0.0 {
                p[0] += jitter * h * rng.random_range(-0.5..0.5);
                p[1] += jitter * h * rng.random_range(-0.5..0.5);
            }
            nodes.push(p);
        }
    }
    let mut edges = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            if i < n {
                edges.push([id(i, j), id(i + 1, j)]);
            }
            if j < n {
                edges.push([id(i, j), id(i, j + 1)]);
            }
            if i < n && j < n && jitter > 0.0 {
                edges.push([id(i, j), id(i + 1, j + 1)]);
            }
        }
    }
    SpatialNetwork::new(2, vec![1.0, 1.0], nodes, edges, &[]).unwrap()
}

pub fn generated(density: f64, seed: u64) -> SpatialNetwork {
    let cfg = GeneratorConfig::new([1.0, 1.0], 0.1, GenTarget::Density(density), seed);
    generate_fiber_network(&cfg).unwrap().0
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Network with every boundary node tagged Dirichlet.
pub fn clamped(net: SpatialNetwork) -> SpatialNetwork {
    tag_dirichlet_nodes(net, &Face::all(2), None).unwrap().0
}

pub fn space(net: &SpatialNetwork, h: f64) -> CoarseSpace {
    let faces: Vec<Face> = if net.dirichlet_nodes().is_empty() { Vec::new() } else { Face::all(2) };
    let mesh = CoarseMesh::new(net.domain(), h, &faces, None, false).unwrap();
    CoarseSpace::new(net, mesh, &assemble_mass(net).diagonal()).unwrap()
}

/// Property-test config without regression files (integration tests have
/// no `lib.rs` to anchor them to).
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..Default::default()
    }
}
