//! Empirical checks of the network assumptions: homogeneous density, local
//! connectivity, and the local Poincaré/Friedrichs constant `μ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lod::{energy_norm, mass_norm};
use crate::netgen::{generate_fiber_network, GenTarget, GeneratorConfig};
use crate::network::SpatialNetwork;
use crate::operators::AssembledOperator;
use crate::solvers::{generalized_eig_smallest, EigenTarget};
use crate::sparse::CsrMatrix;
use crate::study::loglog_slope;

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneityScan {
    pub r: f64,
    pub boxes_per_axis: Vec<usize>,
    /// `(2R)^{-d} |1|²_{M,B}` per box, lexicographic with axis 0 fastest.
    pub densities: Vec<f64>,
    pub mean: f64,
    /// Smallest density.
    pub rho: f64,
    /// Largest over smallest density; infinite if a box is empty.
    pub sigma: f64,
    pub empty_boxes: usize,
}

/// Box densities on the tiling of the domain by boxes of side `2R`.
pub fn homogeneity_scan(net: &SpatialNetwork, mass_diag: &[f64], r: f64) -> Result<HomogeneityScan> {
    if !(r > 0.0) {
        return Err(Error::Audit("box radius must be positive".into()));
    }
    let d = net.dim();
    let side = 2.0 * r;
    let mut counts = Vec::with_capacity(d);
    for &l in net.domain() {
        let n = (l / side).round();
        if n < 1.0 || (n * side - l).abs() > 1e-9 * l {
            return Err(Error::Audit(format!(
                "boxes of side {side} do not tile a domain of length {l}"
            )));
        }
        counts.push(n as usize);
    }
    let total: usize = counts.iter().product();
    let mut mass = vec![0.0; total];
    for x in 0..net.num_nodes() {
        let p = net.coords(x);
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..d {
            let c = ((p[a] / side).floor().max(0.0) as usize).min(counts[a] - 1);
            idx += c * stride;
            stride *= counts[a];
        }
        mass[idx] += mass_diag[x];
    }
    let vol = side.powi(d as i32);
    let densities: Vec<f64> = mass.iter().map(|m| m / vol).collect();
    let rho = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let max = densities.iter().copied().fold(0.0, f64::max);
    let empty_boxes = densities.iter().filter(|&&v| v == 0.0).count();
    Ok(HomogeneityScan {
        r,
        boxes_per_axis: counts,
        mean: densities.iter().sum::<f64>() / total as f64,
        rho,
        sigma: if rho > 0.0 { max / rho } else { f64::INFINITY },
        densities,
        empty_boxes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub pass: bool,
    /// Nodes of the component holding the edges that touch `B_R(x)`.
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

fn in_box(p: &[f64], c: &[f64], r: f64) -> bool {
    p.iter().zip(c).all(|(a, b)| (a - b).abs() <= r)
}

/// Component of the edges inside `B_{R+R₀}(x)` that must contain every edge
/// touching `B_R(x)`; the check fails if those edges are split over several
/// components, leave the outer box, or do not exist.
pub fn connectivity_subgraph(net: &SpatialNetwork, center: &[f64], r: f64, r0: f64) -> Subgraph {
    let n = net.num_nodes();
    let outer: Vec<bool> = (0..n).map(|x| in_box(net.coords(x), center, r + r0)).collect();
    let inner: Vec<bool> = (0..n).map(|x| in_box(net.coords(x), center, r)).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut inside_edges = Vec::new();
    for (e, &[a, b]) in net.edges().iter().enumerate() {
        if outer[a] && outer[b] {
            inside_edges.push(e);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let fail = Subgraph {
        pass: false,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let mut root = None;
    for &[a, b] in net.edges() {
        if !(inner[a] || inner[b]) {
            continue;
        }
        if !(outer[a] && outer[b]) {
            return fail;
        }
        let ra = find(&mut parent, a);
        match root {
            None => root = Some(ra),
            Some(r0) if r0 != ra => return fail,
            _ => {}
        }
    }
    let Some(root) = root else {
        return fail;
    };
    let edges: Vec<usize> = inside_edges
        .into_iter()
        .filter(|&e| find(&mut parent, net.edges()[e][0]) == root)
        .collect();
    let mut nodes: Vec<usize> = edges.iter().flat_map(|&e| net.edges()[e]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    Subgraph {
        pass: true,
        nodes,
        edges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuMode {
    /// Second smallest eigenvalue on boxes away from the boundary.
    Poincare,
    /// Smallest eigenvalue with the Dirichlet nodes removed, on boxes that
    /// touch the boundary.
    Friedrichs,
}

impl MuMode {
    pub fn name(&self) -> &'static str {
        match self {
            MuMode::Poincare => "poincare",
            MuMode::Friedrichs => "friedrichs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplePlacement {
    /// Box centers on the lattice `R·ℤ^d`.
    Grid,
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSample {
    pub mode: MuMode,
    pub r: f64,
    pub center: Vec<f64>,
    pub nodes: usize,
    pub lambda: f64,
    pub inv_lambda_over_r2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MuEstimate {
    pub mode: MuMode,
    pub r0: f64,
    pub samples: Vec<MuSample>,
    /// Centers where the connectivity check failed, with their `R`.
    pub failed: Vec<(f64, Vec<f64>)>,
    /// Mean `λ⁻¹` per `R`, in input order.
    pub mean_inv_lambda: Vec<(f64, f64)>,
    /// `max λ⁻¹/R²` over all samples.
    pub mu2: f64,
    /// Slope of `log mean λ⁻¹` against `log R`.
    pub slope: Option<f64>,
}

fn sample_centers(net: &SpatialNetwork, r: f64, r0: f64, mode: MuMode, placement: SamplePlacement) -> Vec<Vec<f64>> {
    let dom = net.domain();
    let d = net.dim();
    let candidates: Vec<Vec<f64>> = match placement {
        SamplePlacement::Grid => {
            let counts: Vec<usize> = dom.iter().map(|&l| (l / r).floor() as usize + 1).collect();
            let total: usize = counts.iter().product();
            (0..total)
                .map(|mut i| {
                    (0..d)
                        .map(|a| {
                            let c = i % counts[a];
                            i /= counts[a];
                            c as f64 * r
                        })
                        .collect()
                })
                .collect()
        }
        SamplePlacement::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| dom.iter().map(|&l| rng.random_range(0.0..=l)).collect())
                .collect()
        }
    };
    let margin = r + r0;
    candidates
        .into_iter()
        .filter(|c| {
            let dist = c
                .iter()
                .zip(dom)
                .map(|(x, l)| x.min(l - x))
                .fold(f64::INFINITY, f64::min);
            match mode {
                MuMode::Poincare => dist >= margin - 1e-12 * margin,
                MuMode::Friedrichs => dist <= r,
            }
        })
        .collect()
}

/// `L̄` and `M̄` of a subgraph, in local numbering.
fn subgraph_operators(net: &SpatialNetwork, sub: &Subgraph) -> (CsrMatrix, Vec<f64>) {
    let local = |x: usize| sub.nodes.binary_search(&x).unwrap();
    let n = sub.nodes.len();
    let mut m = vec![0.0; n];
    let mut trips = Vec::with_capacity(4 * sub.edges.len());
    for &e in &sub.edges {
        let [a, b] = net.edges()[e];
        let l = net.edge_length(e);
        let (ia, ib) = (local(a), local(b));
        m[ia] += 0.5 * l;
        m[ib] += 0.5 * l;
        let w = 1.0 / l;
        trips.extend([(ia, ia, w), (ib, ib, w), (ia, ib, -w), (ib, ia, -w)]);
    }
    (CsrMatrix::from_triplets(n, n, trips), m)
}

fn sample_lambda(net: &SpatialNetwork, sub: &Subgraph, mode: MuMode) -> Result<Option<f64>> {
    let (l, m) = subgraph_operators(net, sub);
    match mode {
        MuMode::Poincare => Ok(Some(generalized_eig_smallest(&l, &m, EigenTarget::SecondSmallest, 1e-10)?.lambda)),
        MuMode::Friedrichs => {
            let keep: Vec<usize> = (0..sub.nodes.len()).filter(|&i| !net.is_dirichlet(sub.nodes[i])).collect();
            if keep.len() == sub.nodes.len() || keep.is_empty() {
                return Ok(None);
            }
            let lk = l.principal_submatrix(&keep);
            let mk: Vec<f64> = keep.iter().map(|&i| m[i]).collect();
            Ok(Some(generalized_eig_smallest(&lk, &mk, EigenTarget::SmallestDirichlet, 1e-10)?.lambda))
        }
    }
}

/// Local eigenvalue estimates of `μ` over a list of box radii. `r0`
/// defaults to the longest edge.
pub fn estimate_poincare_mu(
    net: &SpatialNetwork,
    r_list: &[f64],
    placement: SamplePlacement,
    mode: MuMode,
    r0: Option<f64>,
) -> Result<MuEstimate> {
    let r0 = r0.unwrap_or_else(|| net.max_edge_length());
    let mut samples = Vec::new();
    let mut failed = Vec::new();
    let mut mean_inv_lambda = Vec::new();
    for &r in r_list {
        if r < r0 {
            return Err(Error::Audit(format!("R = {r} is below the edge length scale R0 = {r0}")));
        }
        let centers = sample_centers(net, r, r0, mode, placement);
        let results: Vec<Result<(Vec<f64>, Option<(usize, f64)>)>> = centers
            .into_par_iter()
            .map(|c| {
                let sub = connectivity_subgraph(net, &c, r, r0);
                if !sub.pass {
                    return Ok((c, None));
                }
                Ok((c, sample_lambda(net, &sub, mode)?.map(|lam| (sub.nodes.len(), lam))))
            })
            .collect();
        let mut inv = Vec::new();
        for res in results {
            match res? {
                (c, Some((nodes, lambda))) => {
                    inv.push(1.0 / lambda);
                    samples.push(MuSample {
                        mode,
                        r,
                        center: c,
                        nodes,
                        lambda,
                        inv_lambda_over_r2: 1.0 / (lambda * r * r),
                    });
                }
                (c, None) => failed.push((r, c)),
            }
        }
        if !inv.is_empty() {
            mean_inv_lambda.push((r, inv.iter().sum::<f64>() / inv.len() as f64));
        }
    }
    let mu2 = samples.iter().map(|s| s.inv_lambda_over_r2).fold(0.0, f64::max);
    let (rs, vals): (Vec<f64>, Vec<f64>) = mean_inv_lambda.iter().copied().unzip();
    Ok(MuEstimate {
        mode,
        r0,
        samples,
        failed,
        mean_inv_lambda,
        mu2,
        slope: loglog_slope(&rs, &vals),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSample {
    pub r: f64,
    pub seed: u64,
    pub nodes: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratedMuSweep {
    pub samples: Vec<SweepSample>,
    /// Mean `λ₂⁻¹` per `R`, in input order.
    pub mean_inv_lambda: Vec<(f64, f64)>,
    /// `max λ₂⁻¹/R²` over all samples.
    pub mu2: f64,
    /// Mean over `R` of `mean λ₂⁻¹ / R²`.
    pub mean_mu2: f64,
    pub slope: Option<f64>,
}

/// Whole-network `λ₂` of generated networks filling the box `B_R`, i.e.
/// the square `[0, 2R]²`, one network per radius and seed.
pub fn generated_network_mu(radii: &[f64], segment_length: f64, density: f64, seeds: &[u64]) -> Result<GeneratedMuSweep> {
    if radii.is_empty() || seeds.is_empty() {
        return Err(Error::Audit("need at least one radius and one seed".into()));
    }
    let jobs: Vec<(f64, u64)> = radii.iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let samples = jobs
        .into_par_iter()
        .map(|(r, seed)| {
            let side = 2.0 * r;
            let cfg = GeneratorConfig::new([side, side], segment_length, GenTarget::Density(density), seed);
            let (net, _) = generate_fiber_network(&cfg)?;
            let sub = Subgraph {
                pass: true,
                nodes: (0..net.num_nodes()).collect(),
                edges: (0..net.num_edges()).collect(),
            };
            let lambda = sample_lambda(&net, &sub, MuMode::Poincare)?.unwrap_or(0.0);
            Ok(SweepSample {
                r,
                seed,
                nodes: net.num_nodes(),
                lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_inv_lambda: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let inv: Vec<f64> = samples.iter().filter(|s| s.r == r).map(|s| 1.0 / s.lambda).collect();
            (r, inv.iter().sum::<f64>() / inv.len() as f64)
        })
        .collect();
    let mu2 = samples.iter().map(|s| 1.0 / (s.lambda * s.r * s.r)).fold(0.0, f64::max);
    let mean_mu2 = mean_inv_lambda.iter().map(|(r, m)| m / (r * r)).sum::<f64>() / radii.len() as f64;
    let (rs, vals): (Vec<f64>, Vec<f64>) = mean_inv_lambda.iter().copied().unzip();
    Ok(GeneratedMuSweep {
        samples,
        mu2,
        mean_mu2,
        slope: loglog_slope(&rs, &vals),
        mean_inv_lambda,
    })
}

/// Relative energy and mass errors; fails on a zero reference.
pub fn relative_errors(op: &AssembledOperator, mass_diag: &[f64], reference: &[f64], u: &[f64]) -> Result<(f64, f64)> {
    let re = energy_norm(op, reference);
    let rm = mass_norm(mass_diag, reference);
    if re == 0.0 || rm == 0.0 {
        return Err(Error::Audit("reference solution has zero norm".into()));
    }
    let e: Vec<f64> = reference.iter().zip(u).map(|(a, b)| a - b).collect();
    Ok((energy_norm(op, &e) / re, mass_norm(mass_diag, &e) / rm))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpolationAudit {
    pub h: f64,
    /// `max |ΨΦ − I|`.
    pub duality_error: f64,
    /// `max |𝓘𝓘v − 𝓘v| / max |𝓘v|` for a seeded random `v`.
    pub idempotency_error: f64,
    /// `max_k |ψ_k|_{M,T_k} · H^{d/2}`.
    pub max_psi_scaled: f64,
    pub max_gram_condition: f64,
    pub min_element_nodes: usize,
}

/// Projection and stability checks of the quasi-interpolation on one mesh.
pub fn interpolation_audit(space: &crate::lod::CoarseSpace, seed: u64) -> Result<InterpolationAudit> {
    let qi = space.interp();
    let n = space.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let iv = qi.interpolate(&v)?;
    let iiv = qi.interpolate(&iv)?;
    let scale = iv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = iv.iter().zip(&iiv).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let h = space.mesh().h();
    let d = space.mesh().dim() as i32;
    Ok(InterpolationAudit {
        h,
        duality_error: qi.duality_error(),
        idempotency_error: if scale > 0.0 { diff / scale } else { diff },
        max_psi_scaled: qi.psi_norms().iter().copied().fold(0.0, f64::max) * h.powf(d as f64 / 2.0),
        max_gram_condition: qi.gram_conditions().iter().copied().fold(0.0, f64::max),
        min_element_nodes: space.partition().iter().map(Vec::len).min().unwrap_or(0),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    /// Longest edge, used as `R₀`.
    pub r0: f64,
    /// Smallest admissible mesh width `4dR₀`.
    pub h_min: f64,
    pub total_mass: f64,
    pub homogeneity: Vec<HomogeneityScan>,
    pub mu: Vec<MuEstimate>,
}

/// Homogeneity scans and `μ` estimates for every radius in `r_list`.
pub fn audit_network(
    net: &SpatialNetwork,
    r_list: &[f64],
    placement: SamplePlacement,
    modes: &[MuMode],
) -> Result<AuditReport> {
    let mass = crate::operators::assemble_mass(net).diagonal();
    let r0 = net.max_edge_length();
    let homogeneity = r_list
        .iter()
        .map(|&r| homogeneity_scan(net, &mass, r))
        .collect::<Result<Vec<_>>>()?;
    let mu = modes
        .iter()
        .map(|&m| estimate_poincare_mu(net, r_list, placement, m, Some(r0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditReport {
        r0,
        h_min: 4.0 * net.dim() as f64 * r0,
        total_mass: mass.iter().sum(),
        homogeneity,
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> SpatialNetwork {
        let h = 1.0 / n as f64;
        let id = |i: usize, j: usize| i + (n + 1) * j;
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                nodes.push(vec![i as f64 * h, j as f64 * h]);
                if i < n {
                    edges.push([id(i, j), id(i + 1, j)]);
                }
                if j < n {
                    edges.push([id(i, j), id(i, j + 1)]);
                }
            }
        }
        SpatialNetwork::new(2, vec![1.0, 1.0], nodes, edges, &[]).unwrap()
    }

    #[test]
    fn box_masses_sum_to_total() {
        let net = grid(16);
        let m = crate::operators::assemble_mass(&net).diagonal();
        let s = homogeneity_scan(&net, &m, 0.125).unwrap();
        let vol = 0.25f64.powi(2);
        let sum: f64 = s.densities.iter().map(|d| d * vol).sum();
        assert!((sum - net.total_length()).abs() < 1e-12);
        assert!(s.sigma >= 1.0);
        assert!(homogeneity_scan(&net, &m, 0.3).is_err());
    }

    #[test]
    fn parallel_fibers_fail_connectivity() {
        let net = SpatialNetwork::new(
            2,
            vec![1.0, 1.0],
            vec![vec![0.0, 0.45], vec![1.0, 0.45], vec![0.0, 0.55], vec![1.0, 0.55], vec![0.0, 0.9], vec![1.0, 0.9]],
            vec![[0, 1], [2, 3], [0, 4], [4, 5], [5, 1], [4, 2]],
            &[],
        )
        .unwrap();
        // Both horizontal fibers touch the inner box; their only link runs
        // outside the outer box.
        let sub = connectivity_subgraph(&net, &[0.5, 0.5], 0.1, 0.1);
        assert!(!sub.pass);
    }

    #[test]
    fn grid_passes_connectivity() {
        let net = grid(16);
        let sub = connectivity_subgraph(&net, &[0.5, 0.5], 0.125, 1.0 / 16.0);
        assert!(sub.pass);
        assert!(!sub.nodes.is_empty());
    }

    #[test]
    fn mu_is_a_running_max() {
        let net = grid(32);
        let est = estimate_poincare_mu(&net, &[0.125, 0.25], SamplePlacement::Grid, MuMode::Poincare, None).unwrap();
        assert!(!est.samples.is_empty());
        let m = est.samples.iter().map(|s| s.inv_lambda_over_r2).fold(0.0, f64::max);
        assert_eq!(m, est.mu2);
    }
}
