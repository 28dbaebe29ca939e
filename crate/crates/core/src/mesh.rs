//! Uniform coarse mesh of the domain box: half-open hypercube elements of
//! side `H`, element patches, and tensor-product multilinear hat functions
//! restricted to network nodes.
//!
//! Lattice indices are lexicographic with the first axis fastest. Mesh
//! nodes are renumbered so that the free nodes (not on a Dirichlet face)
//! come first, in lattice order, followed by the constrained ones.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netgen::Face;
use crate::network::SpatialNetwork;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct CoarseMesh {
    dim: usize,
    domain: Vec<f64>,
    h: f64,
    n_el: Vec<usize>,
    /// `order[new] = lattice index` of mesh nodes.
    order: Vec<usize>,
    /// `index[lattice] = new` index.
    index: Vec<usize>,
    n_free: usize,
    dirichlet_faces: Vec<Face>,
    pub warnings: Vec<String>,
}

impl CoarseMesh {
    /// `r0` (maximal edge length) enables the `H ≥ 4dR₀` check, which
    /// warns or, with `strict`, fails.
    pub fn new(domain: &[f64], h: f64, faces: &[Face], r0: Option<f64>, strict: bool) -> Result<Self> {
        let dim = domain.len();
        if !(dim == 2 || dim == 3) {
            return Err(Error::Mesh(format!("dimension {dim} not supported")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Mesh("H must be positive".into()));
        }
        let mut n_el = Vec::with_capacity(dim);
        for &l in domain {
            let ratio = l / h;
            let n = ratio.round();
            if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::Mesh(format!(
                    "domain length {l} is not an integer multiple of H = {h}"
                )));
            }
            n_el.push(n as usize);
        }
        for f in faces {
            if f.axis >= dim {
                return Err(Error::Mesh(format!("face {} does not exist in {dim}D", f.name())));
            }
        }
        let mut warnings = Vec::new();
        if let Some(r0) = r0 {
            if h < 4.0 * dim as f64 * r0 {
                let msg = format!("H = {h} is below 4·d·R0 = {:.4e}", 4.0 * dim as f64 * r0);
                if strict {
                    return Err(Error::Mesh(msg));
                }
                warnings.push(msg);
            }
        }
        let mut mesh = Self {
            dim,
            domain: domain.to_vec(),
            h,
            n_el,
            order: Vec::new(),
            index: Vec::new(),
            n_free: 0,
            dirichlet_faces: faces.to_vec(),
            warnings,
        };
        let m = mesh.num_nodes();
        let on_gamma: Vec<bool> = (0..m)
            .map(|lat| {
                let c = mesh.node_lattice(lat);
                faces.iter().any(|f| {
                    let v = if f.upper { mesh.n_el[f.axis] } else { 0 };
                    c[f.axis] == v
                })
            })
            .collect();
        let mut order: Vec<usize> = (0..m).filter(|&l| !on_gamma[l]).collect();
        mesh.n_free = order.len();
        order.extend((0..m).filter(|&l| on_gamma[l]));
        let mut index = vec![0; m];
        for (new, &lat) in order.iter().enumerate() {
            index[lat] = new;
        }
        mesh.order = order;
        mesh.index = index;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> &[f64] {
        &self.domain
    }

    pub fn elements_per_axis(&self) -> &[usize] {
        &self.n_el
    }

    pub fn dirichlet_faces(&self) -> &[Face] {
        &self.dirichlet_faces
    }

    pub fn num_elements(&self) -> usize {
        self.n_el.iter().product()
    }

    /// Number of mesh nodes `m`.
    pub fn num_nodes(&self) -> usize {
        self.n_el.iter().map(|n| n + 1).product()
    }

    /// Number of free mesh nodes `m₀`.
    pub fn num_free(&self) -> usize {
        self.n_free
    }

    pub fn element_lattice(&self, e: usize) -> Vec<usize> {
        let mut r = e;
        self.n_el
            .iter()
            .map(|&n| {
                let c = r % n;
                r /= n;
                c
            })
            .collect()
    }

    pub fn element_from_lattice(&self, c: &[usize]) -> usize {
        let mut e = 0;
        for a in (0..self.dim).rev() {
            e = e * self.n_el[a] + c[a];
        }
        e
    }

    fn node_lattice(&self, lat: usize) -> Vec<usize> {
        let mut r = lat;
        self.n_el
            .iter()
            .map(|&n| {
                let c = r % (n + 1);
                r /= n + 1;
                c
            })
            .collect()
    }

    fn node_from_lattice(&self, c: &[usize]) -> usize {
        let mut l = 0;
        for a in (0..self.dim).rev() {
            l = l * (self.n_el[a] + 1) + c[a];
        }
        self.index[l]
    }

    /// Coordinates of mesh node `k` (new numbering).
    pub fn node_coords(&self, k: usize) -> Vec<f64> {
        self.node_lattice(self.order[k])
            .iter()
            .enumerate()
            .map(|(a, &c)| self.coord(a, c))
            .collect()
    }

    fn coord(&self, axis: usize, c: usize) -> f64 {
        if c == self.n_el[axis] {
            self.domain[axis]
        } else {
            c as f64 * self.h
        }
    }

    pub fn is_free(&self, k: usize) -> bool {
        k < self.n_free
    }

    /// Element containing `p`: `floor(p/H)` per axis, with points on the
    /// upper domain face assigned to the last element.
    pub fn locate(&self, p: &[f64]) -> Result<usize> {
        let mut c = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let l = self.domain[a];
            let tol = 1e-12 * l;
            if !(p[a] >= -tol && p[a] <= l + tol) {
                return Err(Error::Mesh(format!("point {:?} outside the domain", &p[..self.dim])));
            }
            let i = (p[a] / self.h).floor().max(0.0) as usize;
            c.push(i.min(self.n_el[a] - 1));
        }
        Ok(self.element_from_lattice(&c))
    }

    /// Corner mesh nodes of element `e`; entry `b` is the corner whose
    /// offset along axis `a` is bit `a` of `b`.
    pub fn element_corners(&self, e: usize) -> Vec<usize> {
        let c = self.element_lattice(e);
        (0..1usize << self.dim)
            .map(|b| {
                let cc: Vec<usize> = (0..self.dim).map(|a| c[a] + ((b >> a) & 1)).collect();
                self.node_from_lattice(&cc)
            })
            .collect()
    }

    /// Assignment element `T_k` of mesh node `k`.
    pub fn assignment_element(&self, k: usize) -> usize {
        let c = self.node_lattice(self.order[k]);
        let ce: Vec<usize> = (0..self.dim).map(|a| c[a].min(self.n_el[a] - 1)).collect();
        self.element_from_lattice(&ce)
    }

    /// Position of mesh node `k` among the corners of its assignment element.
    pub fn assignment_corner(&self, k: usize) -> usize {
        let c = self.node_lattice(self.order[k]);
        (0..self.dim)
            .map(|a| usize::from(c[a] == self.n_el[a]) << a)
            .sum()
    }

    /// Elements adjacent to mesh node `k` (support of its hat function).
    pub fn node_elements(&self, k: usize) -> Vec<usize> {
        let c = self.node_lattice(self.order[k]);
        let mut out = Vec::new();
        for b in 0..1usize << self.dim {
            let mut ce = Vec::with_capacity(self.dim);
            let mut ok = true;
            for a in 0..self.dim {
                let v = c[a] as isize - ((b >> a) & 1) as isize;
                if v < 0 || v as usize >= self.n_el[a] {
                    ok = false;
                    break;
                }
                ce.push(v as usize);
            }
            if ok {
                out.push(self.element_from_lattice(&ce));
            }
        }
        out.sort_unstable();
        out
    }

    /// `U_k(T)`: all elements within Chebyshev lattice distance `k` of `e`.
    pub fn patch(&self, e: usize, k: usize) -> Vec<usize> {
        self.patch_of(&[e], k)
    }

    /// `U_k(ω)` for a set of elements `ω`.
    pub fn patch_of(&self, elements: &[usize], k: usize) -> Vec<usize> {
        let mut mark = vec![false; self.num_elements()];
        for &e in elements {
            let c = self.element_lattice(e);
            let lo: Vec<usize> = c.iter().map(|&v| v.saturating_sub(k)).collect();
            let hi: Vec<usize> = (0..self.dim).map(|a| (c[a] + k).min(self.n_el[a] - 1)).collect();
            let mut cur = lo.clone();
            loop {
                mark[self.element_from_lattice(&cur)] = true;
                let mut a = 0;
                loop {
                    if a == self.dim {
                        break;
                    }
                    if cur[a] < hi[a] {
                        cur[a] += 1;
                        break;
                    }
                    cur[a] = lo[a];
                    a += 1;
                }
                if a == self.dim {
                    break;
                }
            }
        }
        (0..mark.len()).filter(|&e| mark[e]).collect()
    }

    /// Network nodes of each element.
    pub fn partition(&self, net: &SpatialNetwork) -> Result<Vec<Vec<usize>>> {
        self.check_network(net)?;
        let mut out = vec![Vec::new(); self.num_elements()];
        for x in 0..net.num_nodes() {
            out[self.locate(net.coords(x))?].push(x);
        }
        Ok(out)
    }

    /// Element of every network node.
    pub fn node_owner(&self, net: &SpatialNetwork) -> Result<Vec<usize>> {
        self.check_network(net)?;
        (0..net.num_nodes()).map(|x| self.locate(net.coords(x))).collect()
    }

    fn check_network(&self, net: &SpatialNetwork) -> Result<()> {
        if net.dim() != self.dim
            || net
                .domain()
                .iter()
                .zip(&self.domain)
                .any(|(a, b)| (a - b).abs() > 1e-12 * b)
        {
            return Err(Error::Mesh("network and mesh domains differ".into()));
        }
        Ok(())
    }

    /// Multilinear weights of `p` with respect to the corners of element `e`.
    pub fn corner_weights(&self, e: usize, p: &[f64]) -> Vec<f64> {
        let c = self.element_lattice(e);
        let xi: Vec<f64> = (0..self.dim)
            .map(|a| ((p[a] - c[a] as f64 * self.h) / self.h).clamp(0.0, 1.0))
            .collect();
        (0..1usize << self.dim)
            .map(|b| {
                (0..self.dim)
                    .map(|a| if (b >> a) & 1 == 1 { xi[a] } else { 1.0 - xi[a] })
                    .product()
            })
            .collect()
    }

    /// Hat function of mesh node `k` evaluated at `p`.
    pub fn hat(&self, k: usize, p: &[f64]) -> f64 {
        let y = self.node_coords(k);
        (0..self.dim)
            .map(|a| (1.0 - (p[a] - y[a]).abs() / self.h).max(0.0))
            .product()
    }

    /// `Φ` with `Φ[x, j] = φ_j(x)` (`|𝒩| × m`).
    pub fn basis_matrix(&self, net: &SpatialNetwork) -> Result<CsrMatrix> {
        let owner = self.node_owner(net)?;
        let mut trips = Vec::with_capacity(net.num_nodes() << self.dim);
        for (x, &e) in owner.iter().enumerate() {
            let w = self.corner_weights(e, net.coords(x));
            for (j, wj) in self.element_corners(e).into_iter().zip(w) {
                trips.push((x, j, wj));
            }
        }
        Ok(CsrMatrix::from_triplets(net.num_nodes(), self.num_nodes(), trips))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(h: f64, faces: &[Face]) -> CoarseMesh {
        CoarseMesh::new(&[1.0, 1.0], h, faces, None, false).unwrap()
    }

    #[test]
    fn counts() {
        let m = mesh(0.25, &Face::all(2));
        assert_eq!(m.num_elements(), 16);
        assert_eq!(m.num_nodes(), 25);
        assert_eq!(m.num_free(), 9);
        let m1 = mesh(1.0, &[]);
        assert_eq!(m1.num_elements(), 1);
        assert_eq!(m1.locate(&[0.7, 0.2]).unwrap(), 0);
    }

    #[test]
    fn rejects_non_integral_ratio() {
        assert!(CoarseMesh::new(&[1.0, 1.0], 0.3, &[], None, false).is_err());
        assert!(CoarseMesh::new(&[1.0, 1.0], 0.25, &[], Some(0.05), true).is_err());
        let m = CoarseMesh::new(&[1.0, 1.0], 0.25, &[], Some(0.05), false).unwrap();
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn locate_conventions() {
        let m = mesh(0.25, &[]);
        assert_eq!(m.locate(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(m.locate(&[1.0, 1.0]).unwrap(), 15);
        // Interior face point belongs to the element whose lower face it is.
        assert_eq!(m.locate(&[0.25, 0.1]).unwrap(), 1);
        assert!(m.locate(&[1.1, 0.0]).is_err());
    }

    #[test]
    fn patches() {
        let m = mesh(0.25, &[]);
        assert_eq!(m.patch(5, 1).len(), 9);
        assert_eq!(m.patch(0, 1).len(), 4);
        assert_eq!(m.patch(0, 3).len(), 16);
        assert_eq!(m.patch(5, 0), vec![5]);
    }

    #[test]
    fn center_weights() {
        let m = mesh(0.25, &[]);
        let w = m.corner_weights(0, &[0.125, 0.125]);
        assert!(w.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
