use criterion::{criterion_group, criterion_main, Criterion};
use netlod_bench::clamped_network;
use netlod_core::lod::{build_corrector_basis, CoarseSpace, CorrectorOptions};
use netlod_core::mesh::CoarseMesh;
use netlod_core::netgen::Face;
use netlod_core::operators::{assemble_fiber2d, assemble_heat, assemble_mass, EdgeCoefficients, FiberParams, TriplePolicy};
use netlod_core::solvers::SparseCholesky;

fn kernels(c: &mut Criterion) {
    let net = clamped_network(320.0, 1);
    let coeffs = EdgeCoefficients::random_range(&net, 0.1, 1.0, 7).unwrap();
    let fiber = EdgeCoefficients::fiber(&net, FiberParams::default()).unwrap();

    let mut g = c.benchmark_group("assembly");
    g.sample_size(10);
    g.bench_function("heat", |b| b.iter(|| assemble_heat(&net, &coeffs).unwrap()));
    g.bench_function("fiber2d", |b| b.iter(|| assemble_fiber2d(&net, &fiber, TriplePolicy::AllPairs).unwrap()));
    g.finish();

    let op = assemble_heat(&net, &coeffs).unwrap();
    let free: Vec<usize> = (0..net.num_nodes()).filter(|&x| !net.is_dirichlet(x)).collect();
    let k = op.matrix().principal_submatrix(&free);
    let mut g = c.benchmark_group("cholesky");
    g.sample_size(10);
    g.bench_function("heat_free_block", |b| b.iter(|| SparseCholesky::factor(&k).unwrap()));
    g.finish();

    let m = assemble_mass(&net).diagonal();
    let mesh = CoarseMesh::new(&[1.0, 1.0], 0.125, &Face::all(2), None, false).unwrap();
    let space = CoarseSpace::new(&net, mesh, &m).unwrap();
    let mut g = c.benchmark_group("correctors");
    g.sample_size(10);
    g.bench_function("heat_h8_k1", |b| {
        b.iter(|| build_corrector_basis(&op, &space, 1, None, &CorrectorOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
