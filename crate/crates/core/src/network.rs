//! Spatial networks: nodes with coordinates in a box domain, unordered
//! edges with cached lengths, and the Dirichlet node set.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates are stored padded to three components (z = 0 for planar
/// networks) so that 3-component operators can run on planar networks.
pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialNetwork {
    dim: usize,
    domain: Vec<f64>,
    points: Vec<Point>,
    edges: Vec<[usize; 2]>,
    lengths: Vec<f64>,
    dirichlet: Vec<bool>,
    adj_ptr: Vec<usize>,
    /// `(neighbor, edge index)`, sorted by neighbor within each node.
    adj: Vec<(usize, usize)>,
    gamma: Option<Vec<f64>>,
    seed: Option<u64>,
}

/// On-disk JSON layout. Field order here is the order writers emit.
#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    d: usize,
    domain: Vec<f64>,
    nodes: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<f64>>,
    #[serde(default)]
    dirichlet: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Free-form metadata appended by writers; ignored on read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

impl SpatialNetwork {
    /// Build and validate a network. Coordinates must have `dim` entries.
    pub fn new(
        dim: usize,
        domain: Vec<f64>,
        nodes: Vec<Vec<f64>>,
        edges: Vec<[usize; 2]>,
        dirichlet: &[usize],
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidNetwork(format!("dimension must be 2 or 3, got {dim}")));
        }
        if domain.len() != dim || domain.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "domain must have {dim} positive lengths, got {domain:?}"
            )));
        }
        let mut points = Vec::with_capacity(nodes.len());
        for (i, p) in nodes.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidNetwork(format!(
                    "node {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            let mut q = [0.0; 3];
            for c in 0..dim {
                let tol = 1e-12 * domain[c];
                if !p[c].is_finite() || p[c] < -tol || p[c] > domain[c] + tol {
                    return Err(Error::InvalidNetwork(format!("node {i} lies outside the domain")));
                }
                q[c] = p[c];
            }
            points.push(q);
        }
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidNetwork("network has no nodes".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut lengths = Vec::with_capacity(edges.len());
        let mut degree = vec![0usize; n];
        for (e, &[a, b]) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge {e} references node {} but there are {n} nodes",
                    a.max(b)
                )));
            }
            if a == b {
                return Err(Error::InvalidNetwork(format!("edge {e} is a self-loop")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidNetwork(format!("edge {e} is a duplicate")));
            }
            let len = dist(&points[a], &points[b]);
            if !(len > 0.0) {
                return Err(Error::InvalidNetwork(format!("edge {e} has zero length")));
            }
            lengths.push(len);
            degree[a] += 1;
            degree[b] += 1;
        }
        if let Some(i) = degree.iter().position(|&d| d == 0) {
            return Err(Error::InvalidNetwork(format!("node {i} is isolated")));
        }
        let mut mask = vec![false; n];
        for &i in dirichlet {
            if i >= n {
                return Err(Error::InvalidNetwork(format!("Dirichlet node {i} out of range")));
            }
            mask[i] = true;
        }

        let mut adj_ptr = vec![0usize; n + 1];
        for i in 0..n {
            adj_ptr[i + 1] = adj_ptr[i] + degree[i];
        }
        let mut adj = vec![(0, 0); adj_ptr[n]];
        let mut fill = adj_ptr.clone();
        for (e, &[a, b]) in edges.iter().enumerate() {
            adj[fill[a]] = (b, e);
            fill[a] += 1;
            adj[fill[b]] = (a, e);
            fill[b] += 1;
        }
        for i in 0..n {
            adj[adj_ptr[i]..adj_ptr[i + 1]].sort_unstable();
        }
        let net = Self {
            dim,
            domain,
            points,
            edges,
            lengths,
            dirichlet: mask,
            adj_ptr,
            adj,
            gamma: None,
            seed: None,
        };
        let comps = net.component_count();
        if comps != 1 {
            return Err(Error::InvalidNetwork(format!(
                "network is disconnected ({comps} components)"
            )));
        }
        Ok(net)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &[f64] {
        &self.domain
    }

    pub fn num_nodes(&self) -> usize {
        self.points.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Padded 3-component coordinates of node `i`.
    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.points[i][..self.dim]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        self.lengths[e]
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// `(neighbor, edge index)` pairs of node `i`, sorted by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_ptr[i]..self.adj_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj_ptr[i + 1] - self.adj_ptr[i]
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.dirichlet[i]
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.dirichlet[i]).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.lengths.iter().fold(0.0, |m, &l| m.max(l))
    }

    pub fn gamma(&self) -> Option<&[f64]> {
        self.gamma.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_gamma(mut self, gamma: Option<Vec<f64>>) -> Result<Self> {
        if let Some(g) = &gamma {
            if g.len() != self.num_edges() {
                return Err(Error::DimensionMismatch {
                    context: "network gamma",
                    expected: self.num_edges(),
                    got: g.len(),
                });
            }
            if g.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidNetwork("edge coefficients must be positive".into()));
            }
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// Replace the Dirichlet set.
    pub fn with_dirichlet(mut self, nodes: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut mask = vec![false; n];
        for &i in nodes {
            if i >= n {
                return Err(Error::InvalidNetwork(format!("Dirichlet node {i} out of range")));
            }
            mask[i] = true;
        }
        self.dirichlet = mask;
        Ok(self)
    }

    fn component_count(&self) -> usize {
        let n = self.num_nodes();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &(w, _) in self.neighbors(v) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        count
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_json_with(None)
    }

    /// Serialize with an optional trailing `provenance` object.
    pub fn to_json_with(&self, provenance: Option<serde_json::Value>) -> Result<String> {
        let file = NetworkFile {
            d: self.dim,
            domain: self.domain.clone(),
            nodes: (0..self.num_nodes()).map(|i| self.coords(i).to_vec()).collect(),
            edges: self.edges.clone(),
            gamma: self.gamma.clone(),
            dirichlet: self.dirichlet_nodes(),
            seed: self.seed,
            provenance,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: NetworkFile = serde_json::from_str(text)?;
        let net = Self::new(f.d, f.domain, f.nodes, f.edges, &f.dirichlet)?;
        Ok(net.with_gamma(f.gamma)?.with_seed(f.seed))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Write atomically (temporary file in the same directory, then rename).
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Write `bytes` to `path` via a temporary sibling file and a rename, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single_edge() -> SpatialNetwork {
        SpatialNetwork::new(2, vec![1.0, 1.0], vec![vec![0.0, 0.5], vec![1.0, 0.5]], vec![[0, 1]], &[0]).unwrap()
    }

    #[test]
    fn json_round_trip_is_identity() {
        let net = SpatialNetwork::new(
            2,
            vec![1.0, 1.0],
            vec![vec![0.1, 0.2], vec![1.0 / 3.0, 0.7], vec![0.9, 0.123456789012345]],
            vec![[0, 1], [2, 1]],
            &[2],
        )
        .unwrap()
        .with_gamma(Some(vec![0.3, 0.1 + 0.2]))
        .unwrap()
        .with_seed(Some(42));
        let back = SpatialNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(net, back);
        assert_eq!(single_edge(), SpatialNetwork::from_json(&single_edge().to_json().unwrap()).unwrap());
    }

    #[test]
    fn writer_emits_documented_key_order() {
        let text = single_edge().to_json().unwrap();
        let pos: Vec<usize> = ["\"d\"", "\"domain\"", "\"nodes\"", "\"edges\"", "\"dirichlet\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_out_of_range_edge() {
        let text = r#"{"d":2,"domain":[1,1],"nodes":[[0,0],[1,1]],"edges":[[0,2]],"dirichlet":[]}"#;
        assert!(matches!(SpatialNetwork::from_json(text), Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn rejects_invalid_structure() {
        let nodes = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let dup = SpatialNetwork::new(2, vec![1.0, 1.0], nodes.clone(), vec![[0, 1], [1, 0], [1, 2]], &[]);
        assert!(dup.is_err());
        let isolated = SpatialNetwork::new(2, vec![1.0, 1.0], nodes.clone(), vec![[0, 1]], &[]);
        assert!(isolated.is_err());
        let outside = SpatialNetwork::new(2, vec![1.0, 1.0], vec![vec![0.0, 0.0], vec![1.5, 0.0]], vec![[0, 1]], &[]);
        assert!(outside.is_err());
        let bad_dim = SpatialNetwork::new(2, vec![1.0, 1.0], vec![vec![0.0], vec![1.0]], vec![[0, 1]], &[]);
        assert!(bad_dim.is_err());
    }

    #[test]
    fn rejects_disconnected() {
        let nodes = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![0.5, 0.5], vec![0.6, 0.5]];
        assert!(SpatialNetwork::new(2, vec![1.0, 1.0], nodes, vec![[0, 1], [2, 3]], &[]).is_err());
    }
}
