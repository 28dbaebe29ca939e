//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Free arguments act as substring filters on the criterion names, like the
//! default test harness, so `cargo test -p netlod-cli decay` runs only the
//! decay check.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use sha2::{Digest, Sha256};

use netlod_core::audit::{generated_network_mu, interpolation_audit};
use netlod_core::lod::{
    constant_load, element_corrector, energy_norm, error_norms, lod_solve, solve_reference, CoarseSpace,
    IdealOracle, LodOptions, ReferenceMethod, DEFAULT_ORACLE_CAP,
};
use netlod_core::mesh::CoarseMesh;
use netlod_core::netgen::{generate_fiber_network, tag_dirichlet_nodes, Face, GenTarget, GeneratorConfig};
use netlod_core::operators::{
    assemble_fiber, assemble_heat, assemble_laplacian, assemble_mass, assemble_spring, AssembledOperator,
    EdgeCoefficients, FiberParams, TriplePolicy,
};
use netlod_core::problem::{BoundaryData, BoundarySpec, GammaSpec, LoadSpec, Model, ModelSpec, Problem, ProblemSpec};
use netlod_core::solvers::SaddleOptions;
use netlod_core::study::{convergence_study, decay_ratio, lod_on_mesh, StudyOptions};
use netlod_core::SpatialNetwork;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Result<Check> {
    Ok(Check { pass, detail })
}

fn desk_network(density: f64, seed: u64) -> Result<SpatialNetwork> {
    let cfg = GeneratorConfig::new([1.0, 1.0], 0.05, GenTarget::Density(density), seed);
    Ok(generate_fiber_network(&cfg)?.0)
}

/// Triangulated unit-square grid with deterministic interior jitter.
fn tiny_grid(n: usize) -> SpatialNetwork {
    let h = 1.0 / n as f64;
    let id = |i: usize, j: usize| i + (n + 1) * j;
    let mut nodes = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let interior = i > 0 && j > 0 && i < n && j < n;
            let s = ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5;
            let t = ((i * 5 + j * 3) % 7) as f64 / 7.0 - 0.5;
            let jit = if interior { 0.4 * h } else { 0.0 };
            nodes.push(vec![i as f64 * h + jit * s, j as f64 * h + jit * t]);
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
            if i < n && j < n {
                edges.push([id(i, j), id(i + 1, j + 1)]);
            }
        }
    }
    SpatialNetwork::new(2, vec![1.0, 1.0], nodes, edges, &[]).unwrap()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn rel_energy(op: &AssembledOperator, reference: &[f64], u: &[f64]) -> f64 {
    energy_norm(op, &sub(reference, u)) / energy_norm(op, reference)
}

fn stretch_spec(model: Model) -> ProblemSpec {
    ProblemSpec {
        model: ModelSpec::new(model),
        load: LoadSpec::Zero,
        boundary: BoundarySpec {
            faces: vec!["x0".into(), "x1".into()],
            data: BoundaryData::Stretch { factor: 0.5 },
        },
    }
}

fn heat_convergence() -> Result<Check> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let out = pool.install(|| -> Result<_> {
        let spec = ProblemSpec {
            model: ModelSpec {
                gamma: GammaSpec::RandomRange { lo: 0.1, hi: 1.0, seed: 7 },
                ..ModelSpec::new(Model::Heat)
            },
            load: LoadSpec::Constant { value: vec![1.0] },
            boundary: BoundarySpec::default(),
        };
        let problem = Problem::new(desk_network(320.0, 1)?, spec)?;
        Ok(convergence_study(&problem, &[0.25, 0.125, 0.0625], 2, &StudyOptions::default())?)
    })?;
    let secs = start.elapsed().as_secs_f64();
    let fit = |method, norm| {
        out.fits
            .iter()
            .find(|f| f.method == method && f.norm == norm)
            .map(|f| f.slope)
            .unwrap_or(f64::NAN)
    };
    let at = |method| {
        out.rows
            .iter()
            .find(|r| r.method == method && r.h == 0.0625)
            .map(|r| r.energy_error)
            .unwrap_or(f64::NAN)
    };
    let (ks, ms) = (fit("lod", "energy"), fit("lod", "mass"));
    let gain = at("fem") / at("lod");
    check(
        ks >= 0.85 && ms >= 1.6 && gain >= 3.0 && secs <= 300.0,
        format!("K-slope {ks:.3} (>= 0.85), M-slope {ms:.3} (>= 1.6), FEM/LOD at H=1/16 {gain:.2}x (>= 3), {secs:.0} s (<= 300)"),
    )
}

/// Decay in k at H = 1/16 and the desk lifting error at k = 2, H = 1/8,
/// sharing one fine reference solve.
fn displacement_checks() -> Result<(Check, Check)> {
    let problem = Problem::new(desk_network(320.0, 1)?, stretch_spec(Model::Fiber2d))?;
    let g = problem.boundary_values();
    let (u, _) = solve_reference(
        problem.op.matrix(),
        &problem.load,
        problem.net.dirichlet_mask(),
        g.as_deref(),
        ReferenceMethod::Direct,
        1e-12,
    )?;
    let mut warnings = Vec::new();
    let err = |h: f64, k: usize, warnings: &mut Vec<String>| -> Result<f64> {
        let (sol, _) = lod_on_mesh(&problem, h, k, Default::default(), warnings)?;
        Ok(error_norms(&problem.op, &problem.mass, &u, &sol.u).energy_rel)
    };
    let errors: Vec<f64> = (1..=4).map(|k| err(0.0625, k, &mut warnings)).collect::<Result<_>>()?;
    let ratio = decay_ratio(&errors, 1e-3);
    let list: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    let decay = Check {
        pass: ratio.is_some_and(|r| r <= 0.7),
        detail: format!("K-errors k=1..4: {}; geometric-mean ratio {:.3} (<= 0.7)", list.join(" "), ratio.unwrap_or(f64::NAN)),
    };
    let desk = err(0.125, 2, &mut warnings)?;
    Ok((decay, Check { pass: desk <= 0.1, detail: format!("desk fiber2d k=2 H=1/8 rel K-error {desk:.4} (<= 0.1)") }))
}

fn mu_estimation() -> Result<Check> {
    let seeds: Vec<u64> = (1..=10).collect();
    let s = generated_network_mu(&[0.05, 0.1, 0.2], 0.05, 1000.0, &seeds)?;
    let slope = s.slope.unwrap_or(f64::NAN);
    check(
        (1.6..=2.4).contains(&slope) && (1.0..=100.0).contains(&s.mu2),
        format!("slope {:.3} (2 +- 0.4), mu^2 {:.3} in [1, 100], mean over seeds {:.3}", slope, s.mu2, s.mean_mu2),
    )
}

fn oracle_equivalence() -> Result<Check> {
    let mut worst_corrector: f64 = 0.0;
    let mut worst_solution: f64 = 0.0;
    let mut max_dofs = 0;
    for model in [Model::Heat, Model::Spring] {
        let net = tag_dirichlet_nodes(tiny_grid(12), &Face::all(2), None)?.0;
        let coeffs = EdgeCoefficients::random_range(&net, 0.1, 1.0, 3)?;
        let op = match model {
            Model::Heat => assemble_heat(&net, &coeffs)?,
            _ => assemble_spring(&net, &coeffs)?,
        };
        max_dofs = max_dofs.max(op.size());
        let m = assemble_mass(&net).diagonal();
        let mesh = CoarseMesh::new(&[1.0, 1.0], 0.25, &Face::all(2), None, false)?;
        let space = CoarseSpace::new(&net, mesh, &m)?;
        let oracle = IdealOracle::new(&op, &space, DEFAULT_ORACLE_CAP)?;
        let nc = op.n_comp();
        let n = net.num_nodes();
        let phi = space.interp().phi_free();
        for j in 0..space.n_free() {
            for c in 0..nc {
                let mut v = vec![0.0; nc * n];
                for x in 0..n {
                    v[c * n + x] = phi.get(x, j);
                }
                let scale = energy_norm(&op, &v);
                for t in 0..space.mesh().num_elements() {
                    let local = element_corrector(&op, &space, t, &v, 4, SaddleOptions::default())?.to_dense();
                    let ideal = oracle.element_corrector(&op, &space, t, &v);
                    worst_corrector = worst_corrector.max(energy_norm(&op, &sub(&ideal, &local)) / scale);
                }
            }
        }
        let f = constant_load(&m, &vec![1.0; nc]);
        let ideal = oracle.galerkin(&op, &space, &f, None)?;
        let (lod, _) = lod_solve(&op, &space, &f, None, &LodOptions::new(4))?;
        worst_solution = worst_solution.max(rel_energy(&op, &ideal.u, &lod.u));
    }
    check(
        worst_corrector <= 1e-8 && worst_solution <= 1e-8 && max_dofs <= 600,
        format!(
            "max element corrector error {worst_corrector:.2e}, solution error {worst_solution:.2e} (<= 1e-8), {max_dofs} dofs"
        ),
    )
}

fn interpolation_suite() -> Result<Check> {
    let net = tag_dirichlet_nodes(desk_network(1000.0, 1)?, &Face::all(2), None)?.0;
    let m = assemble_mass(&net).diagonal();
    let mut duality: f64 = 0.0;
    let mut idempotency: f64 = 0.0;
    let mut scaled = Vec::new();
    for h in [0.25, 0.125, 0.0625] {
        let mesh = CoarseMesh::new(&[1.0, 1.0], h, &Face::all(2), Some(net.max_edge_length()), false)?;
        let a = interpolation_audit(&CoarseSpace::new(&net, mesh, &m)?, 1)?;
        duality = duality.max(a.duality_error);
        idempotency = idempotency.max(a.idempotency_error);
        scaled.push(a.max_psi_scaled);
    }
    let mut growth: f64 = 0.0;
    for i in 0..scaled.len() {
        for j in i + 1..scaled.len() {
            growth = growth.max(scaled[j] / scaled[i]);
        }
    }
    let s: Vec<String> = scaled.iter().map(|v| format!("{v:.4}")).collect();
    check(
        duality <= 1e-10 && idempotency <= 1e-10 && growth <= 1.5,
        format!(
            "duality {duality:.1e}, idempotency {idempotency:.1e} (<= 1e-10); max |psi| H^(d/2) over H=1/4,1/8,1/16: {} growth {growth:.3} (<= 1.5)",
            s.join(" ")
        ),
    )
}

fn field(net: &SpatialNetwork, nc: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let n = net.num_nodes();
    let mut v = vec![0.0; nc * n];
    for x in 0..n {
        for (c, val) in f(net.coords(x)).into_iter().enumerate() {
            v[c * n + x] = val;
        }
    }
    v
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn operator_kernels() -> Result<Check> {
    let net = desk_network(320.0, 1)?;
    let kernel = |op: &AssembledOperator, v: &[f64]| norm(&op.matrix().mul_vec(v)) / (op.matrix().max_abs() * norm(v));
    let lap = kernel(&assemble_laplacian(&net), &vec![1.0; net.num_nodes()]);
    let spring = assemble_spring(&net, &EdgeCoefficients::random_range(&net, 0.1, 1.0, 7)?)?;
    let rigid = [
        field(&net, 2, |_| vec![1.0, 0.0]),
        field(&net, 2, |_| vec![0.0, 1.0]),
        field(&net, 2, |p| vec![-(p[1] - 0.5), p[0] - 0.5]),
    ]
    .iter()
    .map(|v| kernel(&spring, v))
    .fold(0.0, f64::max);

    // Bending energy = fiber energy minus the stretching energy with the
    // same axial stiffness.
    let bending = |net: &SpatialNetwork, policy| -> Result<f64> {
        let coeffs = EdgeCoefficients::fiber(net, FiberParams::default())?;
        let full = assemble_fiber(net, &coeffs, policy)?;
        let stretch = assemble_spring(net, &coeffs)?;
        let u = field(net, 3, |p| vec![0.3 * p[0] - 1.1 * p[1] + 0.2, 0.7 * p[0] + 0.4 * p[1] - 0.5, -0.9 * p[0] + 0.6 * p[1] + 0.1]);
        let e = full.matrix().quad_form(&u) - stretch.matrix().quad_form(&u[..2 * net.num_nodes()]);
        Ok(e.abs() / (full.matrix().max_abs() * norm(&u).powi(2)))
    };
    // Unjittered grid without diagonals: every collinear triple is exact.
    let mut regular = Vec::new();
    let n = 8;
    let h = 1.0 / n as f64;
    for j in 0..=n {
        for i in 0..=n {
            regular.push(vec![i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| i + (n + 1) * j;
    let mut edges = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            if i < n {
                edges.push([id(i, j), id(i + 1, j)]);
            }
            if j < n {
                edges.push([id(i, j), id(i, j + 1)]);
            }
        }
    }
    let grid = SpatialNetwork::new(2, vec![1.0, 1.0], regular, edges, &[])?;
    let bend_grid = bending(&grid, TriplePolicy::CollinearOnly { max_angle_deg: 1.0 })?;
    let bend_fibers = bending(&net, TriplePolicy::CollinearOnly { max_angle_deg: 1e-6 })?;
    check(
        lap <= 1e-12 && rigid <= 1e-12 && bend_grid <= 1e-12 && bend_fibers <= 1e-12,
        format!(
            "|L1| {lap:.1e}, spring rigid motions {rigid:.1e}, bending of affine fields on collinear triples {bend_grid:.1e} (grid) {bend_fibers:.1e} (fibers), all relative (<= 1e-12)"
        ),
    )
}

fn tiny_lifting() -> Result<Check> {
    let problem = Problem::new(tiny_grid(12), stretch_spec(Model::Spring))?;
    let g = problem.boundary_values();
    let (u, _) = solve_reference(
        problem.op.matrix(),
        &problem.load,
        problem.net.dirichlet_mask(),
        g.as_deref(),
        ReferenceMethod::Direct,
        1e-12,
    )?;
    let (sol, _) = lod_on_mesh(&problem, 0.25, 4, Default::default(), &mut Vec::new())?;
    let e = rel_energy(&problem.op, &u, &sol.u);
    check(e <= 1e-8, format!("tiny spring stretch 0.5 at saturation: rel K-error {e:.2e} (<= 1e-8)"))
}

fn sha(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn cli_determinism() -> Result<Check> {
    let runs: [(&str, &[&str]); 8] = [
        ("net.json", &["generate", "--density", "150", "--seed", "3", "--faces", "all"]),
        ("audit.csv", &["audit", "--net", "net.json", "--R", "0.1,0.05"]),
        ("mu.csv", &["audit", "--density", "300", "--R", "0.1,0.2", "--generated-seeds", "1-2"]),
        ("sol.json", &["solve", "--net", "net.json", "--model", "heat", "--gamma-range", "0.1,1", "--gamma-seed", "7", "--H", "1/4", "--k", "1"]),
        ("ref.json", &["reference", "--net", "net.json", "--model", "heat"]),
        ("conv.csv", &["convergence", "--net", "net.json", "--model", "heat", "--H", "1/2,1/4", "--k", "1"]),
        ("decay.csv", &["decay", "--net", "net.json", "--model", "fiber2d", "--bc", "faces=x0,x1 g=stretch:0.5", "--H", "1/4", "--k", "1,2"]),
        ("interp.csv", &["interp-audit", "--net", "net.json", "--H", "1/2,1/4"]),
    ];
    let mut hashes: Vec<Vec<String>> = Vec::new();
    for threads in ["1", "2", "2"] {
        let dir = tempfile::tempdir()?;
        let mut row = Vec::new();
        for (out, args) in &runs {
            let status = Command::new(env!("CARGO_BIN_EXE_netlod"))
                .args(*args)
                .args(["--out", out])
                .current_dir(dir.path())
                .env("NETLOD_THREADS", threads)
                .output()?;
            ensure!(
                status.status.success(),
                "netlod {} failed: {}",
                args[0],
                String::from_utf8_lossy(&status.stderr)
            );
            row.push(sha(&dir.path().join(out))?);
        }
        hashes.push(row);
    }
    let differing: Vec<&str> = runs
        .iter()
        .enumerate()
        .filter(|(i, _)| hashes.iter().any(|h| h[*i] != hashes[0][*i]))
        .map(|(_, (out, _))| *out)
        .collect();
    check(
        differing.is_empty(),
        format!(
            "{} commands x 3 runs (NETLOD_THREADS 1, 2, 2): {}",
            runs.len(),
            if differing.is_empty() { "all outputs hash-identical".to_string() } else { format!("differing: {}", differing.join(", ")) }
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut results: Vec<Result<Check>> = Vec::new();
    let mut record = |name: &str, r: Result<Check>| {
        report(name, &r);
        results.push(r);
    };
    let single: [(&str, fn() -> Result<Check>); 5] = [
        ("1 heat_convergence", heat_convergence),
        ("3 mu_estimation", mu_estimation),
        ("4 oracle_equivalence", oracle_equivalence),
        ("5 interpolation", interpolation_suite),
        ("6 operator_kernels", operator_kernels),
    ];
    for (name, f) in single {
        if selected(name) {
            record(name, f());
        }
    }
    let (decay_name, lifting_name) = ("2 decay_in_k", "7 displacement_lifting");
    if selected(decay_name) || selected(lifting_name) {
        match displacement_checks() {
            Ok((decay, desk)) => {
                record(decay_name, Ok(decay));
                let lifting = tiny_lifting().map(|t| Check {
                    pass: t.pass && desk.pass,
                    detail: format!("{}; {}", t.detail, desk.detail),
                });
                record(lifting_name, lifting);
            }
            Err(e) => {
                record(decay_name, Err(anyhow::anyhow!("{e:#}")));
                record(lifting_name, Err(e));
            }
        }
    }
    if selected("8 cli_determinism") {
        record("8 cli_determinism", cli_determinism());
    }

    let failed = results.iter().filter(|r| !matches!(r, Ok(c) if c.pass)).count();
    println!("acceptance: {} passed, {} failed", results.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn report(name: &str, r: &Result<Check>) {
    match r {
        Ok(c) => println!("{} criterion {name}: {}", if c.pass { "PASS" } else { "FAIL" }, c.detail),
        Err(e) => println!("FAIL criterion {name}: error: {e:#}"),
    }
}
