//! Shared fixtures for the criterion benchmarks in `benches/`.

use netlod_core::netgen::{generate_fiber_network, tag_dirichlet_nodes, Face, GenTarget, GeneratorConfig};
use netlod_core::SpatialNetwork;

/// Generated unit-square network with all boundary nodes clamped.
pub fn clamped_network(density: f64, seed: u64) -> SpatialNetwork {
    let cfg = GeneratorConfig::new([1.0, 1.0], 0.05, GenTarget::Density(density), seed);
    let net = generate_fiber_network(&cfg).expect("generation").0;
    tag_dirichlet_nodes(net, &Face::all(2), None).expect("tagging").0
}
