//! Experiment configuration: everything a run depends on, serializable so
//! that it can be loaded from a file and embedded in every output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use netlod_core::audit::{MuMode, SamplePlacement};
use netlod_core::lod::ReferenceMethod;
use netlod_core::netgen::{GenTarget, GeneratorConfig};
use netlod_core::problem::{BoundarySpec, LoadSpec, Model, ModelSpec, ProblemSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Generate,
    Audit,
    Solve,
    Reference,
    Convergence,
    Decay,
    InterpAudit,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Generate => "generate",
            CommandKind::Audit => "audit",
            CommandKind::Solve => "solve",
            CommandKind::Reference => "reference",
            CommandKind::Convergence => "convergence",
            CommandKind::Decay => "decay",
            CommandKind::InterpAudit => "interp-audit",
        }
    }
}

/// A positive rational mesh width such as `1/16`, kept exact until the
/// mesh is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Rational {
    pub fn new(num: u64, den: u64) -> anyhow::Result<Self> {
        if num == 0 || den == 0 {
            bail!(UsageError(format!("mesh width {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl FromStr for Rational {
    type Err = anyhow::Error;

    /// Accepts `p/q`, integers and finite decimals (`0.0625`).
    fn from_str(s: &str) -> anyhow::Result<Self> {
        let s = s.trim();
        let bad = || UsageError(format!("'{s}' is not a rational mesh width (e.g. 1/16 or 0.0625)"));
        if let Some((p, q)) = s.split_once('/') {
            let p = p.trim().parse().map_err(|_| bad())?;
            let q = q.trim().parse().map_err(|_| bad())?;
            return Rational::new(p, q);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad().into());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Rational::new(num, den)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Checks that `h` divides every domain length exactly.
pub fn check_divides(h: Rational, domain: &[f64]) -> anyhow::Result<()> {
    for &l in domain {
        let n = l * h.den as f64 / h.num as f64;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 1.0 {
            bail!(UsageError(format!("H = {h} does not divide the domain length {l}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSource {
    /// Network JSON file; takes precedence over the generator.
    pub file: Option<PathBuf>,
    pub generator: Option<GeneratorConfig>,
    /// Faces tagged as Dirichlet in generated network files.
    pub faces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSettings {
    pub method: ReferenceMethod,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSettings {
    pub r: Vec<f64>,
    pub samples: SamplePlacement,
    pub modes: Vec<MuMode>,
    /// Seeds of the whole-network sweep; when non-empty the audit generates
    /// one network per radius and seed instead of sampling boxes.
    #[serde(default)]
    pub generated_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub network: NetworkSource,
    pub problem: ProblemSpec,
    pub h: Vec<Rational>,
    pub k: Vec<usize>,
    pub reference: ReferenceSettings,
    pub fem_baseline: bool,
    pub audit: AuditSettings,
    /// Seed of the random test vector in `interp-audit`.
    pub interp_seed: u64,
    /// Fail instead of warning when `H < 4dR₀`.
    pub strict_mesh: bool,
    /// Primary output file. Not embedded in provenance.
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(command: CommandKind) -> Self {
        let (h, k) = match command {
            CommandKind::Convergence | CommandKind::InterpAudit => {
                (vec![Rational { num: 1, den: 4 }, Rational { num: 1, den: 8 }, Rational { num: 1, den: 16 }], vec![2])
            }
            CommandKind::Decay => (vec![Rational { num: 1, den: 16 }], vec![1, 2, 3, 4]),
            _ => (vec![Rational { num: 1, den: 8 }], vec![2]),
        };
        Self {
            command,
            network: NetworkSource {
                file: None,
                generator: None,
                faces: vec!["all".into()],
            },
            problem: ProblemSpec {
                model: ModelSpec::new(Model::Heat),
                load: LoadSpec::Constant { value: vec![1.0] },
                boundary: BoundarySpec::default(),
            },
            h,
            k,
            reference: ReferenceSettings {
                method: ReferenceMethod::Pcg,
                tol: 1e-10,
            },
            fem_baseline: true,
            audit: AuditSettings {
                r: vec![0.0125, 0.00625],
                samples: SamplePlacement::Grid,
                modes: vec![MuMode::Poincare],
                generated_seeds: Vec::new(),
            },
            interp_seed: 0,
            strict_mesh: false,
            out: None,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    /// The configuration as embedded in outputs: output paths removed so
    /// that the same experiment written elsewhere hashes identically.
    pub fn provenance(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.out = None;
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": c,
        })
    }

    pub fn single_h(&self) -> anyhow::Result<Rational> {
        match self.h.as_slice() {
            [h] => Ok(*h),
            _ => bail!(UsageError(format!("{} needs exactly one H", self.command.name()))),
        }
    }

    pub fn single_k(&self) -> anyhow::Result<usize> {
        match self.k.as_slice() {
            [k] => Ok(*k),
            _ => bail!(UsageError(format!("{} needs exactly one k", self.command.name()))),
        }
    }
}

pub fn parse_list<T: FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| UsageError(format!("invalid {what} '{p}': {e}")).into())
        })
        .collect()
}

/// `1-10` or `1,2,5`.
pub fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once('-') {
        let a: u64 = a.trim().parse().map_err(|_| UsageError(format!("bad seed range '{s}'")))?;
        let b: u64 = b.trim().parse().map_err(|_| UsageError(format!("bad seed range '{s}'")))?;
        if a > b {
            bail!(UsageError(format!("empty seed range '{s}'")));
        }
        return Ok((a..=b).collect());
    }
    parse_list(s, "seed")
}

/// `1x1` or `2x1`.
pub fn parse_domain(s: &str) -> anyhow::Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split('x')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| UsageError(format!("domain '{s}' must look like 1x1")))?;
    match v.as_slice() {
        [a, b] if *a > 0.0 && *b > 0.0 => Ok([*a, *b]),
        _ => bail!(UsageError(format!("domain '{s}' must be two positive lengths like 1x1"))),
    }
}

/// `grid` or `random:COUNT:SEED`.
pub fn parse_samples(s: &str) -> anyhow::Result<SamplePlacement> {
    if s == "grid" {
        return Ok(SamplePlacement::Grid);
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["random", n, seed] => Ok(SamplePlacement::Random {
            count: n.parse().map_err(|_| UsageError(format!("bad sample count in '{s}'")))?,
            seed: seed.parse().map_err(|_| UsageError(format!("bad sample seed in '{s}'")))?,
        }),
        _ => bail!(UsageError(format!("samples '{s}' must be 'grid' or 'random:COUNT:SEED'"))),
    }
}

pub fn parse_modes(s: &str) -> anyhow::Result<Vec<MuMode>> {
    match s {
        "poincare" => Ok(vec![MuMode::Poincare]),
        "friedrichs" => Ok(vec![MuMode::Friedrichs]),
        "both" => Ok(vec![MuMode::Poincare, MuMode::Friedrichs]),
        _ => bail!(UsageError(format!("mode '{s}' must be poincare, friedrichs or both"))),
    }
}

/// Generator settings, starting from `base` when the config already has one.
pub fn generator_or_default(base: Option<GeneratorConfig>) -> GeneratorConfig {
    base.unwrap_or_else(|| GeneratorConfig::new([1.0, 1.0], 0.05, GenTarget::Density(320.0), 1))
}

pub fn write_config(cfg: &ExperimentConfig) -> anyhow::Result<String> {
    serde_json::to_string_pretty(cfg).context("serializing config")
}
