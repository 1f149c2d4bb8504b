//! Sparse graph storage.
//!
//! Edges are kept as a sorted, duplicate-free list of directed pairs together
//! with CSR row offsets, so neighbour lookups are slices and no dense `m × m`
//! matrix is ever built. Undirected graphs store both directions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed edge `⟨src, dst⟩`.
pub type Edge = (usize, usize);

/// How an input edge list is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Symmetry {
    /// Every `⟨i, j⟩` implies `⟨j, i⟩`; missing reverse edges are inserted.
    #[default]
    Undirected,
    /// Edges are taken as given.
    Directed,
}

/// Sorted directed edge list with CSR row offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    num_nodes: usize,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
}

impl Adjacency {
    /// Validates, optionally symmetrizes, sorts and deduplicates `edges`.
    pub fn new(num_nodes: usize, mut edges: Vec<Edge>, symmetry: Symmetry) -> Result<Self> {
        if let Some(&(src, dst)) = edges
            .iter()
            .find(|&&(s, d)| s >= num_nodes || d >= num_nodes)
        {
            return Err(Error::InvalidEdge {
                src,
                dst,
                num_nodes,
            });
        }
        if symmetry == Symmetry::Undirected {
            let reversed: Vec<Edge> = edges
                .iter()
                .filter(|(s, d)| s != d)
                .map(|&(s, d)| (d, s))
                .collect();
            edges.extend(reversed);
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_sorted_unique(num_nodes, edges))
    }

    /// Builds from edges that are already in range, sorted and unique.
    pub(crate) fn from_sorted_unique(num_nodes: usize, edges: Vec<Edge>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.iter().all(|&(s, d)| s < num_nodes && d < num_nodes));
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(src, _) in &edges {
            offsets[src + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        Self {
            num_nodes,
            edges,
            offsets,
        }
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self::from_sorted_unique(num_nodes, Vec::new())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Index range into [`Adjacency::edges`] of the edges leaving `node`.
    pub fn edge_range(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[self.edge_range(node)].iter().map(|&(_, d)| d)
    }

    pub fn contains(&self, edge: Edge) -> bool {
        self.edge_index(edge).is_some()
    }

    /// Position of `edge` in the sorted edge list.
    pub fn edge_index(&self, edge: Edge) -> Option<usize> {
        if edge.0 >= self.num_nodes {
            return None;
        }
        let range = self.edge_range(edge.0);
        self.edges[range.clone()]
            .binary_search(&edge)
            .ok()
            .map(|pos| range.start + pos)
    }

    /// Number of distinct neighbours other than the node itself.
    pub fn degree(&self, node: usize) -> usize {
        self.neighbours(node).filter(|&d| d != node).count()
    }

    pub fn has_self_loop(&self, node: usize) -> bool {
        self.contains((node, node))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(s, d)| self.contains((d, s)))
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_nodes)?;
        let edges = self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        Adjacency::new(self.num_nodes, edges, Symmetry::Directed)
    }
}

/// Node features over a sparse adjacency, optionally carrying a graph label.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub adjacency: Adjacency,
    pub features: Array2<f64>,
    pub label: Option<usize>,
}

impl Graph {
    pub fn new(adjacency: Adjacency, features: Array2<f64>, label: Option<usize>) -> Result<Self> {
        if features.nrows() != adjacency.num_nodes() {
            return Err(Error::shape(
                "graph features",
                format!("{} rows", adjacency.num_nodes()),
                format!("{} rows", features.nrows()),
            ));
        }
        Ok(Self {
            adjacency,
            features,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_edges()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn edges(&self) -> &[Edge] {
        self.adjacency.edges()
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`, moving feature rows along.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let adjacency = self.adjacency.permuted(perm)?;
        let mut features = Array2::zeros(self.features.raw_dim());
        for (old, &new) in perm.iter().enumerate() {
            features.row_mut(new).assign(&self.features.row(old));
        }
        Graph::new(adjacency, features, self.label)
    }
}

/// Builds an undirected graph: endpoints are validated, reverse edges are
/// inserted and duplicates removed. Self-loops are kept.
pub fn build_graph(
    num_nodes: usize,
    edge_list: impl IntoIterator<Item = Edge>,
    features: Array2<f64>,
    label: Option<usize>,
) -> Result<Graph> {
    build_graph_with(num_nodes, edge_list, features, label, Symmetry::Undirected)
}

pub fn build_graph_with(
    num_nodes: usize,
    edge_list: impl IntoIterator<Item = Edge>,
    features: Array2<f64>,
    label: Option<usize>,
    symmetry: Symmetry,
) -> Result<Graph> {
    if features.nrows() != num_nodes {
        return Err(Error::shape(
            "graph features",
            format!("{num_nodes} rows"),
            format!("{} rows", features.nrows()),
        ));
    }
    let adjacency = Adjacency::new(num_nodes, edge_list.into_iter().collect(), symmetry)?;
    Graph::new(adjacency, features, label)
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::shape("permutation", n, perm.len()));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Usage(format!("not a permutation of 0..{n}")));
        }
    }
    Ok(())
}
