//! Serializable problem descriptions: model and coefficients, load and
//! boundary condition, resolved against a network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lod::CoarseSpace;
use crate::mesh::CoarseMesh;
use crate::netgen::{tag_dirichlet_nodes, Face, FaceReport};
use crate::network::SpatialNetwork;
use crate::operators::{
    assemble_fiber, assemble_fiber2d, assemble_heat, assemble_mass, assemble_spring, AssembledOperator,
    EdgeCoefficients, FiberParams, TriplePolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Heat,
    Spring,
    Fiber,
    Fiber2d,
}

impl Model {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "heat" => Ok(Model::Heat),
            "spring" => Ok(Model::Spring),
            "fiber" => Ok(Model::Fiber),
            "fiber2d" => Ok(Model::Fiber2d),
            _ => Err(Error::InvalidInput(format!("unknown model '{s}' (heat, spring, fiber, fiber2d)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Heat => "heat",
            Model::Spring => "spring",
            Model::Fiber => "fiber",
            Model::Fiber2d => "fiber2d",
        }
    }

    /// Number of unknowns per node on a `d`-dimensional network.
    pub fn n_comp(&self, d: usize) -> usize {
        match self {
            Model::Heat => 1,
            Model::Spring => d,
            Model::Fiber => 3,
            Model::Fiber2d => 2,
        }
    }
}

/// Edge coefficients of heat and spring models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GammaSpec {
    Uniform { value: f64 },
    RandomRange { lo: f64, hi: f64, seed: u64 },
    /// Coefficients stored in the network file.
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub gamma: GammaSpec,
    pub fiber: FiberParams,
    pub triples: TriplePolicy,
}

impl ModelSpec {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            gamma: GammaSpec::Uniform { value: 1.0 },
            fiber: FiberParams::default(),
            triples: TriplePolicy::AllPairs,
        }
    }

    pub fn coefficients(&self, net: &SpatialNetwork) -> Result<EdgeCoefficients> {
        if matches!(self.model, Model::Fiber | Model::Fiber2d) {
            return EdgeCoefficients::fiber(net, self.fiber);
        }
        match &self.gamma {
            GammaSpec::Uniform { value } => EdgeCoefficients::uniform(net, *value),
            GammaSpec::RandomRange { lo, hi, seed } => EdgeCoefficients::random_range(net, *lo, *hi, *seed),
            GammaSpec::Network => {
                let g = net
                    .gamma()
                    .ok_or_else(|| Error::InvalidInput("network file has no edge coefficients".into()))?;
                EdgeCoefficients::new(net, g.to_vec())
            }
        }
    }

    pub fn assemble(&self, net: &SpatialNetwork) -> Result<AssembledOperator> {
        let c = self.coefficients(net)?;
        match self.model {
            Model::Heat => assemble_heat(net, &c),
            Model::Spring => assemble_spring(net, &c),
            Model::Fiber => assemble_fiber(net, &c, self.triples),
            Model::Fiber2d => assemble_fiber2d(net, &c, self.triples),
        }
    }
}

/// Right-hand side `f = M·c` for a constant vector `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LoadSpec {
    Zero,
    Constant { value: Vec<f64> },
}

impl LoadSpec {
    /// Parses `zero` or `const:a,b,...`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "zero" {
            return Ok(LoadSpec::Zero);
        }
        let body = s
            .strip_prefix("const:")
            .ok_or_else(|| Error::InvalidInput(format!("load '{s}' must be 'zero' or 'const:a,b,...'")))?;
        Ok(LoadSpec::Constant {
            value: parse_floats(body)?,
        })
    }

    pub fn vector(&self, mass_diag: &[f64], n_comp: usize) -> Result<Vec<f64>> {
        match self {
            LoadSpec::Zero => Ok(vec![0.0; mass_diag.len() * n_comp]),
            LoadSpec::Constant { value } => {
                let value = broadcast(value, n_comp, "load")?;
                Ok(crate::lod::constant_load(mass_diag, &value))
            }
        }
    }
}

/// Boundary values on the Dirichlet faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryData {
    Zero,
    /// `g(x) = [a·x₁, 0, …]`.
    Stretch { factor: f64 },
    Constant { value: Vec<f64> },
}

impl BoundaryData {
    /// Parses `zero`, `stretch:a` or `const:a,b,...`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "zero" {
            Ok(BoundaryData::Zero)
        } else if let Some(a) = s.strip_prefix("stretch:") {
            Ok(BoundaryData::Stretch {
                factor: parse_floats(a)?
                    .first()
                    .copied()
                    .ok_or_else(|| Error::InvalidInput("stretch needs a factor".into()))?,
            })
        } else if let Some(v) = s.strip_prefix("const:") {
            Ok(BoundaryData::Constant { value: parse_floats(v)? })
        } else {
            Err(Error::InvalidInput(format!(
                "boundary data '{s}' must be 'zero', 'stretch:a' or 'const:a,b,...'"
            )))
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BoundaryData::Zero => true,
            BoundaryData::Stretch { factor } => *factor == 0.0,
            BoundaryData::Constant { value } => value.iter().all(|&v| v == 0.0),
        }
    }

    pub fn eval(&self, p: &[f64], n_comp: usize) -> Vec<f64> {
        match self {
            BoundaryData::Zero => vec![0.0; n_comp],
            BoundaryData::Stretch { factor } => {
                let mut v = vec![0.0; n_comp];
                v[0] = factor * p[0];
                v
            }
            BoundaryData::Constant { value } => broadcast(value, n_comp, "boundary").unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub faces: Vec<String>,
    pub data: BoundaryData,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            faces: vec!["all".into()],
            data: BoundaryData::Zero,
        }
    }
}

impl BoundarySpec {
    /// Parses `faces=x0,x1 g=stretch:0.5` (either part may be omitted).
    pub fn parse(s: &str) -> Result<Self> {
        let mut spec = Self::default();
        for part in s.split_whitespace() {
            if let Some(f) = part.strip_prefix("faces=") {
                spec.faces = f.split(',').map(str::to_string).collect();
            } else if let Some(g) = part.strip_prefix("g=") {
                spec.data = BoundaryData::parse(g)?;
            } else {
                return Err(Error::InvalidInput(format!("unknown boundary token '{part}'")));
            }
        }
        Ok(spec)
    }

    pub fn resolve_faces(&self, dim: usize) -> Result<Vec<Face>> {
        let mut faces = Vec::new();
        for f in &self.faces {
            if f == "none" {
                continue;
            } else if f == "all" {
                faces.extend(Face::all(dim));
            } else {
                faces.push(Face::parse(f)?);
            }
        }
        faces.sort_by_key(|f| (f.axis, f.upper));
        faces.dedup();
        if faces.iter().any(|f| f.axis >= dim) {
            return Err(Error::InvalidInput(format!("face outside a {dim}D domain")));
        }
        Ok(faces)
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("'{t}' is not a number")))
        })
        .collect()
}

fn broadcast(v: &[f64], n_comp: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n_comp]),
        l if l == n_comp => Ok(v.to_vec()),
        l if l > n_comp && v[n_comp..].iter().all(|&x| x == 0.0) => Ok(v[..n_comp].to_vec()),
        l => Err(Error::InvalidInput(format!(
            "{what} has {l} components, model has {n_comp}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub model: ModelSpec,
    pub load: LoadSpec,
    pub boundary: BoundarySpec,
}

/// A problem resolved on a network: operator, mass, load and Dirichlet set.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub net: SpatialNetwork,
    pub faces: Vec<Face>,
    pub face_reports: Vec<FaceReport>,
    pub op: AssembledOperator,
    pub mass: Vec<f64>,
    pub load: Vec<f64>,
    /// Reject meshes with `H < 4dR₀` instead of warning.
    pub strict_mesh: bool,
}

impl Problem {
    /// Tags the Dirichlet nodes on the requested faces and assembles.
    pub fn new(net: SpatialNetwork, spec: ProblemSpec) -> Result<Self> {
        let faces = spec.boundary.resolve_faces(net.dim())?;
        let (net, face_reports) = if faces.is_empty() {
            (net.with_dirichlet(&[])?, Vec::new())
        } else {
            tag_dirichlet_nodes(net, &faces, None)?
        };
        let op = spec.model.assemble(&net)?;
        let mass = assemble_mass(&net).diagonal();
        let load = spec.load.vector(&mass, op.n_comp())?;
        Ok(Self {
            spec,
            net,
            faces,
            face_reports,
            op,
            mass,
            load,
            strict_mesh: false,
        })
    }

    pub fn n_comp(&self) -> usize {
        self.op.n_comp()
    }

    /// Coarse space with mesh width `h` and the problem's Dirichlet faces.
    pub fn coarse_space(&self, h: f64) -> Result<CoarseSpace> {
        let r0 = self.net.max_edge_length();
        let mesh = CoarseMesh::new(self.net.domain(), h, &self.faces, Some(r0), self.strict_mesh)?;
        CoarseSpace::new(&self.net, mesh, &self.mass)
    }

    /// Coarse lifting of the boundary data, `None` for homogeneous data.
    pub fn lifting(&self, space: &CoarseSpace) -> Option<Vec<f64>> {
        if self.spec.boundary.data.is_zero() {
            return None;
        }
        let nc = self.n_comp();
        let data = &self.spec.boundary.data;
        Some(space.coarse_lifting(nc, |p| data.eval(p, nc)))
    }

    /// Boundary values of the exact data at every dof (zero off Γ).
    pub fn boundary_values(&self) -> Option<Vec<f64>> {
        if self.spec.boundary.data.is_zero() {
            return None;
        }
        let n = self.net.num_nodes();
        let nc = self.n_comp();
        let mut g = vec![0.0; nc * n];
        for x in self.net.dirichlet_nodes() {
            let v = self.spec.boundary.data.eval(self.net.coords(x), nc);
            for c in 0..nc {
                g[c * n + x] = v[c];
            }
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!(LoadSpec::parse("const:0,0,-1e5").unwrap(), LoadSpec::Constant {
            value: vec![0.0, 0.0, -1e5]
        });
        let b = BoundarySpec::parse("faces=x0,x1 g=stretch:0.5").unwrap();
        assert_eq!(b.faces, vec!["x0", "x1"]);
        assert_eq!(b.data, BoundaryData::Stretch { factor: 0.5 });
        assert!(BoundarySpec::parse("faces=x0 bogus").is_err());
        assert!(Model::parse("beam").is_err());
    }

    #[test]
    fn load_broadcasts_and_truncates_zero_tail() {
        let m = [1.0, 2.0];
        let f = LoadSpec::parse("const:0,-1,0").unwrap().vector(&m, 2).unwrap();
        assert_eq!(f, vec![0.0, 0.0, -1.0, -2.0]);
        assert!(LoadSpec::parse("const:1,2,3").unwrap().vector(&m, 2).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ProblemSpec {
            model: ModelSpec::new(Model::Fiber2d),
            load: LoadSpec::Zero,
            boundary: BoundarySpec::parse("faces=x0,x1 g=stretch:0.5").unwrap(),
        };
        let s = serde_json::to_string(&spec).unwrap();
        let back: ProblemSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
    }
}
