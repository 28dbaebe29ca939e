//! `netlod`: network generation, assumption audits, LOD solves and
//! convergence studies from the command line.

mod config;
mod output;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netlod_core::audit::SamplePlacement;
use netlod_core::lod::ReferenceMethod;
use netlod_core::netgen::GenTarget;
use netlod_core::operators::TriplePolicy;
use netlod_core::problem::{BoundarySpec, GammaSpec, LoadSpec, Model};

use config::{
    generator_or_default, parse_domain, parse_list, parse_modes, parse_samples, CommandKind, ExperimentConfig,
    Rational,
};

/// Bad flags, files or configuration; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "netlod", version, about = "LOD numerical homogenization of spatial network models")]
struct Cli {
    /// Print a single JSON result object on standard output.
    #[arg(long, global = true)]
    json: bool,
    /// Report wall times (never written to output files).
    #[arg(long, global = true)]
    timings: bool,
    /// Start from this experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved config and exit without running.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Default)]
struct GenArgs {
    /// Domain size, e.g. 1x1.
    #[arg(long)]
    domain: Option<String>,
    /// Length of the placed segments.
    #[arg(long)]
    fiber_length: Option<f64>,
    /// Total fiber length to place.
    #[arg(long, conflicts_with = "density")]
    mass: Option<f64>,
    /// Fiber length per unit area.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Distance below which crossing nodes are merged.
    #[arg(long)]
    merge_tol: Option<f64>,
    /// Also prune dangling edges that end on the domain boundary.
    #[arg(long)]
    prune_boundary_stubs: bool,
}

impl GenArgs {
    fn any(&self) -> bool {
        self.domain.is_some()
            || self.fiber_length.is_some()
            || self.mass.is_some()
            || self.density.is_some()
            || self.seed.is_some()
            || self.merge_tol.is_some()
            || self.prune_boundary_stubs
    }
}

#[derive(Args, Debug)]
struct NetArgs {
    /// Network JSON file (instead of generating one).
    #[arg(long, conflicts_with_all = ["domain", "fiber_length", "mass", "density", "seed", "merge_tol", "prune_boundary_stubs"])]
    net: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// heat, spring, fiber or fiber2d.
    #[arg(long)]
    model: Option<String>,
    /// Uniform edge coefficient.
    #[arg(long, conflicts_with_all = ["gamma_range", "gamma_from_net"])]
    gamma: Option<f64>,
    /// Seeded uniform random edge coefficients in [lo, hi].
    #[arg(long, value_name = "LO,HI", conflicts_with = "gamma_from_net")]
    gamma_range: Option<String>,
    #[arg(long)]
    gamma_seed: Option<u64>,
    /// Use the edge coefficients stored in the network file.
    #[arg(long)]
    gamma_from_net: bool,
    #[arg(long)]
    wire_radius: Option<f64>,
    #[arg(long)]
    young_modulus: Option<f64>,
    /// Bending pairs: `all` or `collinear:DEG`.
    #[arg(long)]
    triples: Option<String>,
    /// `zero` or `const:a,b,...` (load M·c).
    #[arg(long)]
    load: Option<String>,
    /// `faces=x0,x1 g=stretch:0.5`; faces `all`, `none` or x0,x1,y0,...
    #[arg(long)]
    bc: Option<String>,
    /// Fail instead of warning when H < 4·d·R0.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct RefArgs {
    /// pcg or direct.
    #[arg(long)]
    reference: Option<String>,
    /// Relative residual tolerance of the reference solve.
    #[arg(long)]
    reference_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct OutArg {
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a random fiber network.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Faces whose nodes are tagged Dirichlet: all, none or x0,x1,...
        #[arg(long)]
        faces: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Homogeneity, connectivity and μ estimates.
    Audit {
        #[command(flatten)]
        net: NetArgs,
        /// Box radii.
        #[arg(long = "R", value_name = "R1,R2,...")]
        r: Option<String>,
        /// `grid` or `random:COUNT:SEED`.
        #[arg(long)]
        samples: Option<String>,
        /// poincare, friedrichs or both.
        #[arg(long)]
        mode: Option<String>,
        /// Dirichlet faces for the Friedrichs mode.
        #[arg(long)]
        bc: Option<String>,
        /// Instead of sampling boxes, generate one network on [0,2R]^2 per
        /// radius and seed (e.g. 1-10) and use its whole-network eigenvalue.
        #[arg(long, value_name = "SEEDS")]
        generated_seeds: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// LOD solve on one coarse mesh.
    Solve {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "H")]
        h: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Fine-scale reference solve.
    Reference {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        reference: RefArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Errors of LOD and coarse FEM over a list of mesh widths.
    Convergence {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "H", value_name = "H1,H2,...")]
        h: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// Skip the coarse FEM rows.
        #[arg(long)]
        no_fem: bool,
        #[command(flatten)]
        reference: RefArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// LOD errors at fixed H over a list of localization parameters.
    Decay {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "H")]
        h: Option<String>,
        #[arg(long, value_name = "K1,K2,...")]
        k: Option<String>,
        #[command(flatten)]
        reference: RefArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Dual basis scaling and Gram conditioning of the quasi-interpolation.
    InterpAudit {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long = "H", value_name = "H1,H2,...")]
        h: Option<String>,
        /// Dirichlet faces of the coarse space.
        #[arg(long)]
        bc: Option<String>,
        /// Seed of the random vector used for the idempotency check.
        #[arg(long)]
        vector_seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
}

impl Cmd {
    fn kind(&self) -> CommandKind {
        match self {
            Cmd::Generate { .. } => CommandKind::Generate,
            Cmd::Audit { .. } => CommandKind::Audit,
            Cmd::Solve { .. } => CommandKind::Solve,
            Cmd::Reference { .. } => CommandKind::Reference,
            Cmd::Convergence { .. } => CommandKind::Convergence,
            Cmd::Decay { .. } => CommandKind::Decay,
            Cmd::InterpAudit { .. } => CommandKind::InterpAudit,
        }
    }
}

fn core<T>(r: netlod_core::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| UsageError(e.to_string()).into())
}

fn apply_gen(cfg: &mut ExperimentConfig, gen: &GenArgs) -> anyhow::Result<()> {
    if !gen.any() {
        return Ok(());
    }
    let mut g = generator_or_default(cfg.network.generator.take());
    if let Some(d) = &gen.domain {
        g.domain = parse_domain(d)?;
    }
    if let Some(r) = gen.fiber_length {
        g.segment_length = r;
    }
    if let Some(m) = gen.mass {
        g.target = GenTarget::Mass(m);
    }
    if let Some(rho) = gen.density {
        g.target = GenTarget::Density(rho);
    }
    if let Some(s) = gen.seed {
        g.seed = s;
    }
    if gen.merge_tol.is_some() {
        g.merge_tolerance = gen.merge_tol;
    }
    if gen.prune_boundary_stubs {
        g.prune_boundary_stubs = true;
    }
    cfg.network.generator = Some(g);
    cfg.network.file = None;
    Ok(())
}

fn apply_net(cfg: &mut ExperimentConfig, net: &NetArgs) -> anyhow::Result<()> {
    if let Some(p) = &net.net {
        cfg.network.file = Some(p.clone());
        cfg.network.generator = None;
    }
    apply_gen(cfg, &net.gen)
}

fn apply_bc(cfg: &mut ExperimentConfig, bc: &Option<String>) -> anyhow::Result<()> {
    if let Some(b) = bc {
        cfg.problem.boundary = core(BoundarySpec::parse(b))?;
    }
    Ok(())
}

fn apply_model(cfg: &mut ExperimentConfig, m: &ModelArgs) -> anyhow::Result<()> {
    let spec = &mut cfg.problem.model;
    if let Some(name) = &m.model {
        spec.model = core(Model::parse(name))?;
    }
    if let Some(v) = m.gamma {
        spec.gamma = GammaSpec::Uniform { value: v };
    }
    if let Some(r) = &m.gamma_range {
        let v: Vec<f64> = parse_list(r, "gamma range")?;
        let [lo, hi] = v[..] else {
            return Err(UsageError(format!("gamma range '{r}' must be LO,HI")).into());
        };
        let seed = match spec.gamma {
            GammaSpec::RandomRange { seed, .. } => seed,
            _ => 0,
        };
        spec.gamma = GammaSpec::RandomRange { lo, hi, seed };
    }
    if let Some(s) = m.gamma_seed {
        match &mut spec.gamma {
            GammaSpec::RandomRange { seed, .. } => *seed = s,
            _ => return Err(UsageError("--gamma-seed needs --gamma-range".into()).into()),
        }
    }
    if m.gamma_from_net {
        spec.gamma = GammaSpec::Network;
    }
    if let Some(r) = m.wire_radius {
        spec.fiber.wire_radius = r;
    }
    if let Some(e) = m.young_modulus {
        spec.fiber.young_modulus = e;
    }
    if let Some(t) = &m.triples {
        spec.triples = if t == "all" {
            TriplePolicy::AllPairs
        } else if let Some(deg) = t.strip_prefix("collinear:") {
            TriplePolicy::CollinearOnly {
                max_angle_deg: deg
                    .parse()
                    .map_err(|_| UsageError(format!("bad angle in '{t}'")))?,
            }
        } else {
            return Err(UsageError(format!("triples '{t}' must be 'all' or 'collinear:DEG'")).into());
        };
    }
    if let Some(l) = &m.load {
        cfg.problem.load = core(LoadSpec::parse(l))?;
    }
    apply_bc(cfg, &m.bc)?;
    if m.strict {
        cfg.strict_mesh = true;
    }
    Ok(())
}

fn apply_ref(cfg: &mut ExperimentConfig, r: &RefArgs) -> anyhow::Result<()> {
    if let Some(m) = &r.reference {
        cfg.reference.method = match m.as_str() {
            "pcg" => ReferenceMethod::Pcg,
            "direct" => ReferenceMethod::Direct,
            _ => return Err(UsageError(format!("reference '{m}' must be pcg or direct")).into()),
        };
    }
    if let Some(t) = r.reference_tol {
        cfg.reference.tol = t;
    }
    Ok(())
}

fn apply_out(cfg: &mut ExperimentConfig, out: &OutArg) {
    if out.out.is_some() {
        cfg.out = out.out.clone();
    }
}

fn apply_h(cfg: &mut ExperimentConfig, h: &Option<String>) -> anyhow::Result<()> {
    if let Some(h) = h {
        cfg.h = parse_list::<Rational>(h, "H")?;
    }
    Ok(())
}

/// Config file (or defaults) with the command-line flags laid over it.
fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(p) => {
            let mut c = ExperimentConfig::load(p)?;
            if c.command != kind {
                return Err(UsageError(format!(
                    "config is for '{}', not '{}'",
                    c.command.name(),
                    kind.name()
                ))
                .into());
            }
            c.command = kind;
            c
        }
        None => ExperimentConfig::defaults(kind),
    };
    match &cli.command {
        Cmd::Generate { gen, faces, out } => {
            apply_gen(&mut cfg, gen)?;
            if cfg.network.generator.is_none() {
                cfg.network.generator = Some(generator_or_default(None));
            }
            cfg.network.file = None;
            if let Some(f) = faces {
                cfg.network.faces = f.split(',').map(str::to_string).collect();
            }
            apply_out(&mut cfg, out);
        }
        Cmd::Audit {
            net,
            r,
            samples,
            mode,
            bc,
            generated_seeds,
            out,
        } => {
            apply_net(&mut cfg, net)?;
            if let Some(s) = generated_seeds {
                cfg.audit.generated_seeds = config::parse_seeds(s)?;
            }
            if let Some(r) = r {
                cfg.audit.r = parse_list(r, "R")?;
            }
            if let Some(s) = samples {
                cfg.audit.samples = parse_samples(s)?;
            }
            if let Some(m) = mode {
                cfg.audit.modes = parse_modes(m)?;
            }
            apply_bc(&mut cfg, bc)?;
            apply_out(&mut cfg, out);
        }
        Cmd::Solve { net, model, h, k, out } => {
            apply_net(&mut cfg, net)?;
            apply_model(&mut cfg, model)?;
            apply_h(&mut cfg, h)?;
            if let Some(k) = k {
                cfg.k = vec![*k];
            }
            apply_out(&mut cfg, out);
        }
        Cmd::Reference {
            net,
            model,
            reference,
            out,
        } => {
            apply_net(&mut cfg, net)?;
            apply_model(&mut cfg, model)?;
            apply_ref(&mut cfg, reference)?;
            apply_out(&mut cfg, out);
        }
        Cmd::Convergence {
            net,
            model,
            h,
            k,
            no_fem,
            reference,
            out,
        } => {
            apply_net(&mut cfg, net)?;
            apply_model(&mut cfg, model)?;
            apply_h(&mut cfg, h)?;
            if let Some(k) = k {
                cfg.k = vec![*k];
            }
            if *no_fem {
                cfg.fem_baseline = false;
            }
            apply_ref(&mut cfg, reference)?;
            apply_out(&mut cfg, out);
        }
        Cmd::Decay {
            net,
            model,
            h,
            k,
            reference,
            out,
        } => {
            apply_net(&mut cfg, net)?;
            apply_model(&mut cfg, model)?;
            apply_h(&mut cfg, h)?;
            if let Some(k) = k {
                cfg.k = parse_list(k, "k")?;
            }
            apply_ref(&mut cfg, reference)?;
            apply_out(&mut cfg, out);
        }
        Cmd::InterpAudit {
            net,
            h,
            bc,
            vector_seed,
            out,
        } => {
            apply_net(&mut cfg, net)?;
            apply_h(&mut cfg, h)?;
            apply_bc(&mut cfg, bc)?;
            if let Some(s) = vector_seed {
                cfg.interp_seed = *s;
            }
            apply_out(&mut cfg, out);
        }
    }
    if let SamplePlacement::Random { count: 0, .. } = cfg.audit.samples {
        return Err(UsageError("random sampling needs at least one sample".into()).into());
    }
    Ok(cfg)
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("NETLOD_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| UsageError(format!("NETLOD_THREADS='{v}' is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<netlod_core::Error>() {
        Some(
            netlod_core::Error::InvalidInput(_) | netlod_core::Error::Format(_) | netlod_core::Error::Mesh(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| resolve(&cli)).and_then(|cfg| {
        if cli.print_config {
            println!("{}", config::write_config(&cfg)?);
            return Ok(());
        }
        let outcome = run::run(&cfg)?;
        outcome.report(cli.json, cli.timings)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if cli.json {
                let obj = serde_json::json!({ "ok": false, "exit_code": code, "error": format!("{e:#}") });
                println!("{obj}");
            }
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
