//! Fill-reducing ordering by nested dissection on the matrix graph.
//!
//! Separators are taken from the middle level of a BFS level structure rooted
//! at a pseudo-peripheral node. This is George's automatic nested dissection;
//! on the planar-ish graphs produced by fiber networks it gives separators of
//! size O(sqrt(n)).

use crate::sparse::CsrMatrix;

const LEAF_SIZE: usize = 64;

struct Graph {
    ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    fn from_pattern(a: &CsrMatrix) -> Self {
        let n = a.nrows();
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        let mut adj = Vec::with_capacity(a.nnz());
        for r in 0..n {
            let (cols, _) = a.row(r);
            adj.extend(cols.iter().copied().filter(|&c| c != r));
            ptr.push(adj.len());
        }
        Self { ptr, adj }
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.ptr[v]..self.ptr[v + 1]]
    }
}

struct Workspace {
    stamp: Vec<u32>,
    level: Vec<u32>,
    seen: Vec<u32>,
    current: u32,
}

impl Workspace {
    fn next_stamp(&mut self) -> u32 {
        self.current += 1;
        self.current
    }
}

/// Returns `perm` with `perm[new] = old`.
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let graph = Graph::from_pattern(a);
    let mut ws = Workspace {
        stamp: vec![0; n],
        level: vec![0; n],
        seen: vec![0; n],
        current: 0,
    };
    let mut order = Vec::with_capacity(n);
    dissect(&graph, (0..n).collect(), &mut ws, &mut order);
    debug_assert_eq!(order.len(), n);
    order
}

/// BFS inside the set marked with `set_stamp`. Returns the level structure.
fn bfs_levels(g: &Graph, root: usize, set_stamp: u32, ws: &mut Workspace) -> Vec<Vec<usize>> {
    let seen_stamp = ws.next_stamp();
    let mut levels = vec![vec![root]];
    ws.seen[root] = seen_stamp;
    ws.level[root] = 0;
    loop {
        let mut next = Vec::new();
        let depth = levels.len() as u32;
        for &v in levels.last().unwrap() {
            for &w in g.neighbors(v) {
                if ws.stamp[w] == set_stamp && ws.seen[w] != seen_stamp {
                    ws.seen[w] = seen_stamp;
                    ws.level[w] = depth;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        levels.push(next);
    }
    levels
}

fn dissect(g: &Graph, nodes: Vec<usize>, ws: &mut Workspace, order: &mut Vec<usize>) {
    if nodes.len() <= LEAF_SIZE {
        order.extend(nodes);
        return;
    }
    let set_stamp = ws.next_stamp();
    for &v in &nodes {
        ws.stamp[v] = set_stamp;
    }

    // Pseudo-peripheral root: repeat BFS from a minimum-degree node of the last level.
    let degree_in_set = |v: usize, ws: &Workspace| {
        g.neighbors(v)
            .iter()
            .filter(|&&w| ws.stamp[w] == set_stamp)
            .count()
    };
    let mut root = nodes[0];
    let mut levels = bfs_levels(g, root, set_stamp, ws);
    let reached: usize = levels.iter().map(Vec::len).sum();
    if reached < nodes.len() {
        // Disconnected: split off the reached component and recurse on both.
        let comp_stamp = ws.seen[root];
        let (comp, rest): (Vec<usize>, Vec<usize>) =
            nodes.into_iter().partition(|&v| ws.seen[v] == comp_stamp);
        dissect(g, comp, ws, order);
        dissect(g, rest, ws, order);
        return;
    }
    for _ in 0..4 {
        let last = levels.last().unwrap();
        let cand = *last
            .iter()
            .min_by_key(|&&v| (degree_in_set(v, ws), v))
            .unwrap();
        let trial = bfs_levels(g, cand, set_stamp, ws);
        if trial.len() > levels.len() {
            root = cand;
            levels = trial;
        } else {
            break;
        }
    }
    let _ = root;

    if levels.len() < 3 {
        order.extend(nodes);
        return;
    }

    let half = nodes.len() / 2;
    let mut acc = 0;
    let mut mid = 1;
    for (l, lv) in levels.iter().enumerate() {
        acc += lv.len();
        if acc >= half {
            mid = l;
            break;
        }
    }
    mid = mid.clamp(1, levels.len() - 2);

    // Re-stamp levels for the chosen structure (bfs_levels above may have been a trial).
    let lvl_stamp = ws.next_stamp();
    for (l, lv) in levels.iter().enumerate() {
        for &v in lv {
            ws.seen[v] = lvl_stamp;
            ws.level[v] = l as u32;
        }
    }

    let mut part_a: Vec<usize> = levels[..mid].iter().flatten().copied().collect();
    let part_b: Vec<usize> = levels[mid + 1..].iter().flatten().copied().collect();
    let mut sep = Vec::new();
    for &v in &levels[mid] {
        let touches_b = g
            .neighbors(v)
            .iter()
            .any(|&w| ws.seen[w] == lvl_stamp && ws.level[w] as usize == mid + 1);
        if touches_b {
            sep.push(v);
        } else {
            part_a.push(v);
        }
    }
    dissect(g, part_a, ws, order);
    dissect(g, part_b, ws, order);
    order.extend(sep);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(n: usize) -> CsrMatrix {
        let idx = |i: usize, j: usize| i * n + j;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((idx(i, j), idx(i, j), 4.0));
                if i + 1 < n {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < n {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n * n, n * n, t)
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = grid_laplacian(30);
        let mut p = nested_dissection(&a);
        p.sort_unstable();
        assert_eq!(p, (0..900).collect::<Vec<_>>());
    }

    #[test]
    fn disconnected_graph_is_ordered_fully() {
        let mut t: Vec<_> = (0..200).map(|i| (i, i, 1.0)).collect();
        t.push((0, 1, -1.0));
        t.push((1, 0, -1.0));
        let a = CsrMatrix::from_triplets(200, 200, t);
        assert_eq!(nested_dissection(&a).len(), 200);
    }
}
