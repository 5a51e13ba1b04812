//! Directed graph storage and perturbation application.
//!
//! A [`DirectedGraph`] keeps the binary adjacency in dual CSR/CSC form: one
//! row-major view following out-links and one following in-links (the CSR of
//! the transpose). Self-loops are never stored; operators that need them add
//! them at normalization time.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Row-major binary adjacency with sorted neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    fn from_sorted_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut indptr = vec![0usize; n + 1];
        for &(src, _) in edges {
            indptr[src + 1] += 1;
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let indices = edges.iter().map(|&(_, dst)| dst).collect();
        Adjacency { n, indptr, indices }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn has(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }
}

/// Binary directed graph with degree bookkeeping.
///
/// Invariants: entries are binary, no duplicate edges, no stored self-loops,
/// and the out/in views describe the identical edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    n: usize,
    m: usize,
    out_adj: Adjacency,
    in_adj: Adjacency,
    d_out: Vec<usize>,
    d_in: Vec<usize>,
}

impl DirectedGraph {
    /// Build from a canonical edge list: indices in range, no self-loops,
    /// no duplicates. Use [`crate::data`] loaders for raw input files.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::graph(format!(
                    "edge ({i}, {j}) out of range for n={n}"
                )));
            }
            if i == j {
                return Err(Error::graph(format!("self-loop ({i}, {i}) not allowed")));
            }
            sorted.push((i, j));
        }
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::graph("duplicate edge in input".to_string()));
        }
        let out_adj = Adjacency::from_sorted_edges(n, &sorted);
        let mut rev: Vec<(usize, usize)> = sorted.iter().map(|&(i, j)| (j, i)).collect();
        rev.sort_unstable();
        let in_adj = Adjacency::from_sorted_edges(n, &rev);
        let d_out = (0..n).map(|i| out_adj.degree(i)).collect();
        let d_in = (0..n).map(|i| in_adj.degree(i)).collect();
        Ok(DirectedGraph {
            n,
            m: sorted.len(),
            out_adj,
            in_adj,
            d_out,
            d_in,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.m
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        self.out_adj.neighbors(i)
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        self.in_adj.neighbors(i)
    }

    pub fn d_out(&self, i: usize) -> usize {
        self.d_out[i]
    }

    pub fn d_in(&self, i: usize) -> usize {
        self.d_in[i]
    }

    pub fn total_degree(&self, i: usize) -> usize {
        self.d_out[i] + self.d_in[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out_adj.has(i, j)
    }

    /// Edges in (src, dst) lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.m);
        for i in 0..self.n {
            for &j in self.out_neighbors(i) {
                out.push((i, j));
            }
        }
        out
    }

    /// Graph with every edge reversed. `d_out` of the result equals `d_in`
    /// of the original.
    pub fn transpose(&self) -> DirectedGraph {
        DirectedGraph {
            n: self.n,
            m: self.m,
            out_adj: self.in_adj.clone(),
            in_adj: self.out_adj.clone(),
            d_out: self.d_in.clone(),
            d_in: self.d_out.clone(),
        }
    }

    /// Edge set `{(i, j) : A_ij = 1 or A_ji = 1}`; the result equals its own
    /// transpose.
    pub fn symmetrize(&self) -> DirectedGraph {
        let mut edges = Vec::with_capacity(2 * self.m);
        for (i, j) in self.edges() {
            edges.push((i, j));
            if !self.has_edge(j, i) {
                edges.push((j, i));
            }
        }
        DirectedGraph::new(self.n, &edges).expect("symmetrization preserves validity")
    }

    /// Toggle each `(i, j)` in `flips`: present edges are removed, absent
    /// edges added. Degrees are recomputed. Duplicate flips of the same
    /// ordered pair are rejected (a double toggle is ambiguous).
    pub fn apply_flips(&self, flips: &[(usize, usize)]) -> Result<DirectedGraph> {
        let mut sorted_flips = flips.to_vec();
        sorted_flips.sort_unstable();
        if sorted_flips.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::graph("duplicate flip of the same ordered pair"));
        }
        for &(i, j) in &sorted_flips {
            if i == j {
                return Err(Error::graph(format!("flip ({i}, {i}) is a self-loop")));
            }
            if i >= self.n || j >= self.n {
                return Err(Error::graph(format!("flip ({i}, {j}) out of range")));
            }
        }
        let mut edges = Vec::with_capacity(self.m + flips.len());
        let mut fi = 0usize;
        // Merge walk over the sorted edge list and sorted flips.
        for (i, j) in self.edges() {
            while fi < sorted_flips.len() && sorted_flips[fi] < (i, j) {
                edges.push(sorted_flips[fi]); // addition
                fi += 1;
            }
            if fi < sorted_flips.len() && sorted_flips[fi] == (i, j) {
                fi += 1; // removal
            } else {
                edges.push((i, j));
            }
        }
        while fi < sorted_flips.len() {
            edges.push(sorted_flips[fi]);
            fi += 1;
        }
        DirectedGraph::new(self.n, &edges)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::<f64>::zeros((self.n, self.n));
        for (i, j) in self.edges() {
            a[[i, j]] = 1.0;
        }
        a
    }
}

/// Real-valued node features, one row per node.
#[derive(Debug, Clone)]
pub struct NodeFeatures {
    x: Array2<f64>,
}

impl NodeFeatures {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("node features contain non-finite values"));
        }
        Ok(NodeFeatures { x })
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }
}

/// Class labels in `[0, num_classes)`.
#[derive(Debug, Clone)]
pub struct Labels {
    y: Vec<usize>,
    num_classes: usize,
}

impl Labels {
    pub fn new(y: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
            return Err(Error::config(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Labels { y, num_classes })
    }

    /// Infer the class count as `max + 1`.
    pub fn from_vec(y: Vec<usize>) -> Self {
        let num_classes = y.iter().copied().max().map_or(0, |m| m + 1);
        Labels { y, num_classes }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, i: usize) -> usize {
        self.y[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.y
    }
}

/// Disjoint train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl DataSplit {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::config(format!("split index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::config(format!("node {i} appears in two splits")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::config("split does not cover all labeled nodes"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degrees_follow_definition() {
        // d_out counts A_ij over j, d_in counts A_ji over j.
        let g = DirectedGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.d_out(0), 1);
        assert_eq!(g.d_out(1), 1);
        assert_eq!(g.d_out(2), 0);
        assert_eq!(g.d_in(0), 0);
        assert_eq!(g.d_in(1), 1);
        assert_eq!(g.d_in(2), 1);
        let sum_out: usize = (0..3).map(|i| g.d_out(i)).sum();
        let sum_in: usize = (0..3).map(|i| g.d_in(i)).sum();
        assert_eq!(sum_out, g.num_edges());
        assert_eq!(sum_in, g.num_edges());
    }

    #[test]
    fn empty_graph_is_valid() {
        let g = DirectedGraph::new(3, &[]).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.d_out(1), 0);
    }

    #[test]
    fn rejects_duplicates_and_self_loops() {
        assert!(DirectedGraph::new(3, &[(0, 1), (0, 1)]).is_err());
        assert!(DirectedGraph::new(3, &[(1, 1)]).is_err());
        assert!(DirectedGraph::new(2, &[(0, 5)]).is_err());
    }

    #[test]
    fn symmetrize_single_edge() {
        let g = DirectedGraph::new(2, &[(0, 1)]).unwrap();
        let s = g.symmetrize();
        assert_eq!(s.edges(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn symmetrize_hand_enumerated() {
        // {(0,1),(1,0),(2,0)} gains (0,2) only.
        let g = DirectedGraph::new(3, &[(0, 1), (1, 0), (2, 0)]).unwrap();
        let s = g.symmetrize();
        assert_eq!(s.edges(), vec![(0, 1), (0, 2), (1, 0), (2, 0)]);
    }

    #[test]
    fn symmetrize_is_idempotent() {
        let g = DirectedGraph::new(4, &[(0, 1), (1, 2), (3, 1)]).unwrap();
        let s = g.symmetrize();
        assert_eq!(s, s.symmetrize());
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn flip_removes_and_adds() {
        let g = DirectedGraph::new(2, &[(0, 1)]).unwrap();
        let removed = g.apply_flips(&[(0, 1)]).unwrap();
        assert_eq!(removed.num_edges(), 0);

        let g = DirectedGraph::new(3, &[]).unwrap();
        let added = g.apply_flips(&[(2, 0)]).unwrap();
        assert_eq!(added.edges(), vec![(2, 0)]);
        assert_eq!(added.d_in(0), 1);
    }

    #[test]
    fn flips_are_involutive() {
        let g = DirectedGraph::new(4, &[(0, 1), (2, 3), (3, 0)]).unwrap();
        let flips = [(0, 1), (1, 2), (3, 2)];
        let once = g.apply_flips(&flips).unwrap();
        let twice = once.apply_flips(&flips).unwrap();
        assert_eq!(g, twice);
    }

    #[test]
    fn duplicate_flip_rejected() {
        let g = DirectedGraph::new(3, &[(0, 1)]).unwrap();
        assert!(g.apply_flips(&[(0, 2), (0, 2)]).is_err());
    }

    #[test]
    fn transpose_involution_and_degrees() {
        let g = DirectedGraph::new(4, &[(0, 1), (1, 2), (3, 1)]).unwrap();
        assert_eq!(g.transpose().transpose(), g);
        for i in 0..4 {
            assert_eq!(g.d_out(i), g.transpose().d_in(i));
        }
    }

    #[test]
    fn labels_range_checked() {
        assert!(Labels::new(vec![0, 1, 2], 3).is_ok());
        assert!(Labels::new(vec![0, 3], 3).is_err());
    }
}
