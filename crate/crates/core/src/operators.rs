//! Node-wise operators on a spatial network: mass `M`, Laplacian `L` and
//! the model operators (heat, spring, fiber).
//!
//! Every operator is a sum of node contributions `K_x`. Each contribution is
//! stored as a dense block over `x` and its neighbors, so restriction to a
//! node set `ω` is an exact partial sum rather than a re-derivation.
//!
//! Vector-valued fields use component-major numbering: dof `c·N + x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Point, SpatialNetwork};
use crate::sparse::{CsrMatrix, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Mass,
    Laplacian,
    Heat,
    Spring,
    /// Spring plus 3D bending, three components.
    Fiber,
    /// Spring plus in-plane bending on a planar network, two components.
    Fiber2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub wire_radius: f64,
    pub young_modulus: f64,
}

impl Default for FiberParams {
    /// Round steel wire of radius 2.5 mm.
    fn default() -> Self {
        Self {
            wire_radius: 2.5e-3,
            young_modulus: 210e9,
        }
    }
}

impl FiberParams {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.wire_radius * self.wire_radius
    }

    pub fn second_moment(&self) -> f64 {
        0.25 * self.area() * self.wire_radius * self.wire_radius
    }

    /// Axial stiffness `EA`, used as the spring coefficient of every edge.
    pub fn axial(&self) -> f64 {
        self.young_modulus * self.area()
    }

    /// Bending coefficient `2EI (|x−y| + |x−z|)⁻²` of a node triple.
    pub fn bending(&self, ly: f64, lz: f64) -> f64 {
        2.0 * self.young_modulus * self.second_moment() / ((ly + lz) * (ly + lz))
    }
}

/// Per-edge coefficients `γ_xy` and optional fiber material.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCoefficients {
    gamma: Vec<f64>,
    fiber: Option<FiberParams>,
}

impl EdgeCoefficients {
    pub fn new(net: &SpatialNetwork, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != net.num_edges() {
            return Err(Error::InvalidInput(format!(
                "missing edge coefficients: {} given for {} edges",
                gamma.len(),
                net.num_edges()
            )));
        }
        if let Some(e) = gamma.iter().position(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput(format!("edge {e} has non-positive coefficient")));
        }
        Ok(Self { gamma, fiber: None })
    }

    pub fn uniform(net: &SpatialNetwork, value: f64) -> Result<Self> {
        Self::new(net, vec![value; net.num_edges()])
    }

    /// Independent uniform draws in `[lo, hi]`, one per edge in edge order.
    pub fn random_range(net: &SpatialNetwork, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidInput(format!("invalid coefficient range [{lo}, {hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = (0..net.num_edges())
            .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect();
        Self::new(net, gamma)
    }

    /// Fiber material: every edge gets `γ = EA`.
    pub fn fiber(net: &SpatialNetwork, params: FiberParams) -> Result<Self> {
        let mut c = Self::uniform(net, params.axial())?;
        c.fiber = Some(params);
        Ok(c)
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn fiber_params(&self) -> Option<FiberParams> {
        self.fiber
    }

    pub fn min(&self) -> f64 {
        self.gamma.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }
}

/// Which neighbor pairs at a node carry bending stiffness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriplePolicy {
    #[default]
    AllPairs,
    /// Only pairs whose edges continue each other within `max_angle_deg`.
    CollinearOnly { max_angle_deg: f64 },
}

/// Dense contribution of one node: `nodes[0]` is the owner, the rest its
/// neighbors. Local dof `c·nodes.len() + a`, values row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBlock {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

impl NodeBlock {
    fn new(nodes: Vec<usize>, n_comp: usize) -> Self {
        let m = nodes.len() * n_comp;
        Self {
            nodes,
            values: vec![0.0; m * m],
        }
    }

    /// Add `w · a aᵀ` for a local dof vector `a`.
    fn add_rank_one(&mut self, w: f64, a: &[f64]) {
        let m = a.len();
        for i in 0..m {
            if a[i] == 0.0 {
                continue;
            }
            let wi = w * a[i];
            for j in 0..m {
                self.values[i * m + j] += wi * a[j];
            }
        }
    }

    /// `vᵀ K_x v` for a global dof vector `v`.
    pub fn quad_form(&self, v: &[f64], n_nodes: usize, n_comp: usize) -> f64 {
        let ln = self.nodes.len();
        let m = ln * n_comp;
        let local: Vec<f64> = (0..m)
            .map(|i| v[(i / ln) * n_nodes + self.nodes[i % ln]])
            .collect();
        let mut s = 0.0;
        for i in 0..m {
            let mut row = 0.0;
            for j in 0..m {
                row += self.values[i * m + j] * local[j];
            }
            s += local[i] * row;
        }
        s
    }

    pub fn triplets(&self, n_nodes: usize, n_comp: usize) -> impl Iterator<Item = Triplet> + '_ {
        let ln = self.nodes.len();
        let m = ln * n_comp;
        (0..m * m).filter_map(move |k| {
            let v = self.values[k];
            if v == 0.0 {
                return None;
            }
            let (i, j) = (k / m, k % m);
            let gi = (i / ln) * n_nodes + self.nodes[i % ln];
            let gj = (j / ln) * n_nodes + self.nodes[j % ln];
            Some((gi, gj, v))
        })
    }
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    kind: OperatorKind,
    n_comp: usize,
    n_nodes: usize,
    matrix: CsrMatrix,
    blocks: Vec<NodeBlock>,
}

impl AssembledOperator {
    fn from_blocks(kind: OperatorKind, n_comp: usize, n_nodes: usize, blocks: Vec<NodeBlock>) -> Self {
        let size = n_comp * n_nodes;
        let trips: Vec<Triplet> = blocks.iter().flat_map(|b| b.triplets(n_nodes, n_comp)).collect();
        let matrix = CsrMatrix::from_triplets(size, size, trips);
        Self {
            kind,
            n_comp,
            n_nodes,
            matrix,
            blocks,
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn n_comp(&self) -> usize {
        self.n_comp
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn size(&self) -> usize {
        self.n_comp * self.n_nodes
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn node_block(&self, x: usize) -> &NodeBlock {
        &self.blocks[x]
    }

    pub fn node_contribution(&self, x: usize) -> Vec<Triplet> {
        self.blocks[x].triplets(self.n_nodes, self.n_comp).collect()
    }

    /// `K_ω = Σ_{x∈ω} K_x`.
    pub fn restrict(&self, region: &[usize]) -> CsrMatrix {
        let trips: Vec<Triplet> = region
            .iter()
            .flat_map(|&x| self.blocks[x].triplets(self.n_nodes, self.n_comp))
            .collect();
        CsrMatrix::from_triplets(self.size(), self.size(), trips)
    }

    /// `(K_ω v, v)` evaluated block by block.
    pub fn quad_form_region(&self, v: &[f64], region: &[usize]) -> f64 {
        region
            .iter()
            .map(|&x| self.blocks[x].quad_form(v, self.n_nodes, self.n_comp))
            .sum()
    }

    /// Diagonal of a mass operator (one entry per node).
    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal()
    }

    /// Largest entrywise difference between the stored matrix and the sum
    /// of node contributions.
    pub fn reassembly_error(&self) -> f64 {
        let all: Vec<usize> = (0..self.n_nodes).collect();
        let re = self.restrict(&all);
        let diff = re.add(&self.matrix.scale(-1.0));
        diff.max_abs()
    }

    /// Expand a scalar field operator to `n` components (block diagonal).
    pub fn per_component(&self, n: usize) -> CsrMatrix {
        let nn = self.n_nodes;
        let trips: Vec<Triplet> = (0..n)
            .flat_map(|c| self.matrix.triplets().map(move |(i, j, v)| (c * nn + i, c * nn + j, v)))
            .collect();
        CsrMatrix::from_triplets(n * nn, n * nn, trips)
    }
}

fn check_coeffs(net: &SpatialNetwork, coeffs: &EdgeCoefficients) -> Result<()> {
    if coeffs.gamma.len() != net.num_edges() {
        return Err(Error::InvalidInput(format!(
            "missing edge coefficients: {} given for {} edges",
            coeffs.gamma.len(),
            net.num_edges()
        )));
    }
    Ok(())
}

fn local_nodes(net: &SpatialNetwork, x: usize) -> Vec<usize> {
    let mut nodes = Vec::with_capacity(net.degree(x) + 1);
    nodes.push(x);
    nodes.extend(net.neighbors(x).iter().map(|&(y, _)| y));
    nodes
}

fn unit(a: &Point, b: &Point) -> [f64; 3] {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    [d[0] / n, d[1] / n, d[2] / n]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn scale3(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Unit normal used when `∂_xy` and `∂_xz` are parallel: `∂_xy × e_i` with
/// `i` the axis of the smallest-magnitude component (lowest index on ties).
pub fn fallback_normal(d: &[f64; 3]) -> [f64; 3] {
    let mut axis = 0;
    for i in 1..3 {
        if d[i].abs() < d[axis].abs() {
            axis = i;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let c = cross(d, &e);
    scale3(&c, 1.0 / norm3(&c))
}

/// Normal pair used by the bending terms of the triple `(y, x, z)`:
/// `η⁽¹⁾` orthogonal to both edge directions, and the second normals
/// `η^{y,(2)} = ∂_xy × η⁽¹⁾`, `η^{z,(2)} = −∂_xz × η⁽¹⁾`.
pub fn bending_normals(dxy: &[f64; 3], dxz: &[f64; 3]) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let c = cross(dxy, dxz);
    let nc = norm3(&c);
    let eta1 = if nc > 1e-12 { scale3(&c, 1.0 / nc) } else { fallback_normal(dxy) };
    let eta2y = cross(dxy, &eta1);
    let eta2z = scale3(&cross(dxz, &eta1), -1.0);
    (eta1, eta2y, eta2z)
}

fn node_mass_block(net: &SpatialNetwork, x: usize) -> NodeBlock {
    let m: f64 = net.neighbors(x).iter().map(|&(_, e)| 0.5 * net.edge_length(e)).sum();
    NodeBlock {
        nodes: vec![x],
        values: vec![m],
    }
}

/// Scalar edge terms `½ γ (v(x) − v(y))² / |x − y|`.
fn node_scalar_block(net: &SpatialNetwork, gamma: Option<&[f64]>, x: usize) -> NodeBlock {
    let nodes = local_nodes(net, x);
    let mut b = NodeBlock::new(nodes, 1);
    let m = b.nodes.len();
    let mut a = vec![0.0; m];
    for (k, &(_, e)) in net.neighbors(x).iter().enumerate() {
        let g = gamma.map_or(1.0, |g| g[e]);
        a.iter_mut().for_each(|v| *v = 0.0);
        a[0] = 1.0;
        a[k + 1] = -1.0;
        b.add_rank_one(0.5 * g / net.edge_length(e), &a);
    }
    b
}

/// Spring terms, plus bending terms when `fiber` is set. `n_comp` is 2 or
/// 3; with 2 components the in-plane parts of the 3D vectors are used.
fn node_elastic_block(
    net: &SpatialNetwork,
    coeffs: &EdgeCoefficients,
    n_comp: usize,
    fiber: Option<(FiberParams, TriplePolicy)>,
    x: usize,
) -> NodeBlock {
    let nodes = local_nodes(net, x);
    let ln = nodes.len();
    let mut b = NodeBlock::new(nodes, n_comp);
    let px = net.point(x);
    let nbrs = net.neighbors(x);
    let mut a = vec![0.0; ln * n_comp];

    for (k, &(y, e)) in nbrs.iter().enumerate() {
        let d = unit(px, net.point(y));
        a.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..n_comp {
            a[c * ln] = d[c];
            a[c * ln + k + 1] = -d[c];
        }
        b.add_rank_one(0.5 * coeffs.gamma[e] / net.edge_length(e), &a);
    }

    let Some((params, policy)) = fiber else {
        return b;
    };
    let cos_limit = match policy {
        TriplePolicy::AllPairs => None,
        TriplePolicy::CollinearOnly { max_angle_deg } => Some(max_angle_deg.to_radians().cos()),
    };
    for (ky, &(y, ey)) in nbrs.iter().enumerate() {
        for (kz, &(z, ez)) in nbrs.iter().enumerate().skip(ky + 1) {
            let dxy = unit(px, net.point(y));
            let dxz = unit(px, net.point(z));
            if let Some(cl) = cos_limit {
                // Angle between ∂_xy and −∂_xz.
                let c = -(dxy[0] * dxz[0] + dxy[1] * dxz[1] + dxy[2] * dxz[2]);
                if c < cl {
                    continue;
                }
            }
            let ly = net.edge_length(ey);
            let lz = net.edge_length(ez);
            // Ordered pairs (y, z) and (z, y) give identical terms.
            let w = 2.0 * params.bending(ly, lz) * (ly + lz) / 4.0;
            let (eta1, eta2y, eta2z) = bending_normals(&dxy, &dxz);
            for (ey_vec, ez_vec) in [(eta1, eta1), (eta2y, eta2z)] {
                a.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..n_comp {
                    let ay = ey_vec[c] / ly;
                    let az = ez_vec[c] / lz;
                    a[c * ln + ky + 1] = ay;
                    a[c * ln + kz + 1] = az;
                    a[c * ln] = -(ay + az);
                }
                b.add_rank_one(w, &a);
            }
        }
    }
    b
}

fn blocks_par<F>(n: usize, f: F) -> Vec<NodeBlock>
where
    F: Fn(usize) -> NodeBlock + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

pub fn assemble_mass(net: &SpatialNetwork) -> AssembledOperator {
    let blocks = blocks_par(net.num_nodes(), |x| node_mass_block(net, x));
    AssembledOperator::from_blocks(OperatorKind::Mass, 1, net.num_nodes(), blocks)
}

pub fn assemble_laplacian(net: &SpatialNetwork) -> AssembledOperator {
    let blocks = blocks_par(net.num_nodes(), |x| node_scalar_block(net, None, x));
    AssembledOperator::from_blocks(OperatorKind::Laplacian, 1, net.num_nodes(), blocks)
}

pub fn assemble_heat(net: &SpatialNetwork, coeffs: &EdgeCoefficients) -> Result<AssembledOperator> {
    check_coeffs(net, coeffs)?;
    let blocks = blocks_par(net.num_nodes(), |x| node_scalar_block(net, Some(&coeffs.gamma), x));
    Ok(AssembledOperator::from_blocks(OperatorKind::Heat, 1, net.num_nodes(), blocks))
}

/// Spring operator with `n = d` components.
pub fn assemble_spring(net: &SpatialNetwork, coeffs: &EdgeCoefficients) -> Result<AssembledOperator> {
    check_coeffs(net, coeffs)?;
    let n = net.dim();
    let blocks = blocks_par(net.num_nodes(), |x| node_elastic_block(net, coeffs, n, None, x));
    Ok(AssembledOperator::from_blocks(OperatorKind::Spring, n, net.num_nodes(), blocks))
}

fn fiber_params(coeffs: &EdgeCoefficients) -> Result<FiberParams> {
    coeffs
        .fiber
        .ok_or_else(|| Error::InvalidInput("fiber operator needs wire radius and Young's modulus".into()))
}

/// Spring plus bending with three displacement components. Planar networks
/// are embedded at `z = 0`.
pub fn assemble_fiber(
    net: &SpatialNetwork,
    coeffs: &EdgeCoefficients,
    policy: TriplePolicy,
) -> Result<AssembledOperator> {
    check_coeffs(net, coeffs)?;
    let p = fiber_params(coeffs)?;
    let blocks = blocks_par(net.num_nodes(), |x| node_elastic_block(net, coeffs, 3, Some((p, policy)), x));
    Ok(AssembledOperator::from_blocks(OperatorKind::Fiber, 3, net.num_nodes(), blocks))
}

/// In-plane fiber model on a planar network: the out-of-plane components
/// are dropped from the spring and bending terms.
pub fn assemble_fiber2d(
    net: &SpatialNetwork,
    coeffs: &EdgeCoefficients,
    policy: TriplePolicy,
) -> Result<AssembledOperator> {
    check_coeffs(net, coeffs)?;
    if net.dim() != 2 {
        return Err(Error::InvalidInput("the in-plane fiber model needs a planar network".into()));
    }
    let p = fiber_params(coeffs)?;
    let blocks = blocks_par(net.num_nodes(), |x| node_elastic_block(net, coeffs, 2, Some((p, policy)), x));
    Ok(AssembledOperator::from_blocks(OperatorKind::Fiber2d, 2, net.num_nodes(), blocks))
}

/// Relative PSD slack: quadratic forms down to `−PSD_TOL·max|K|·|v|²` are
/// treated as roundoff.
pub const PSD_TOL: f64 = 1e-12;

/// `|v|_{K,ω}`; a scalar operator applied to a vector field sums over
/// components.
pub fn seminorm(op: &AssembledOperator, v: &[f64], region: Option<&[usize]>) -> Result<f64> {
    let size = op.size();
    if v.len() % size != 0 || v.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "seminorm",
            expected: size,
            got: v.len(),
        });
    }
    let mut q = 0.0;
    for chunk in v.chunks(size) {
        q += match region {
            Some(r) => op.quad_form_region(chunk, r),
            None => op.matrix.quad_form(chunk),
        };
    }
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if q < -PSD_TOL * op.matrix.max_abs() * vv {
        return Err(Error::OperatorDefect {
            context: "seminorm",
            detail: format!("negative quadratic form {q:.3e}"),
        });
    }
    Ok(q.max(0.0).sqrt())
}

/// `|f|_{M⁻¹} = (Σ f_i² / M_ii)^{1/2}`, componentwise for vector fields.
pub fn inverse_mass_norm(f: &[f64], mass_diag: &[f64]) -> Result<f64> {
    let n = mass_diag.len();
    if n == 0 || f.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            context: "inverse_mass_norm",
            expected: n,
            got: f.len(),
        });
    }
    if let Some(i) = mass_diag.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::InvalidInput(format!("mass entry {i} is not positive")));
    }
    Ok(f.iter()
        .enumerate()
        .map(|(i, v)| v * v / mass_diag[i % n])
        .sum::<f64>()
        .sqrt())
}
