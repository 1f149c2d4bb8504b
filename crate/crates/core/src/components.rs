//! Weakly connected components and the node-to-cluster assignment they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Edge;

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; returns `false` if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Maps every node to one of `num_clusters` contiguous cluster indices.
///
/// This is the sparse form of the binary cluster assignment matrix: row `i`
/// has its single one in column `assignment[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    num_clusters: usize,
    assignment: Vec<usize>,
}

impl ClusterAssignment {
    /// Validates that indices are contiguous and every cluster is non-empty.
    pub fn new(num_clusters: usize, assignment: Vec<usize>) -> Result<Self> {
        let mut used = vec![false; num_clusters];
        for &c in &assignment {
            if c >= num_clusters {
                return Err(Error::Usage(format!(
                    "cluster index {c} outside 0..{num_clusters}"
                )));
            }
            used[c] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::Usage(format!("cluster {empty} has no members")));
        }
        Ok(Self {
            num_clusters,
            assignment,
        })
    }

    pub fn identity(num_nodes: usize) -> Self {
        Self {
            num_clusters: num_nodes,
            assignment: (0..num_nodes).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    /// Member lists per cluster, each in ascending node order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Weakly connected components of the graph on `num_nodes` nodes spanned by
/// `edges`, with edge direction ignored.
///
/// Nodes touching no edge become singleton clusters. Cluster ids are handed
/// out in order of each component's smallest node, so the output is fully
/// determined by the input. Runs in `O(|V| + |E| α(|V|))`.
pub fn connected_components(num_nodes: usize, edges: &[Edge]) -> Result<ClusterAssignment> {
    let mut sets = UnionFind::new(num_nodes);
    for &(src, dst) in edges {
        if src >= num_nodes || dst >= num_nodes {
            return Err(Error::InvalidEdge {
                src,
                dst,
                num_nodes,
            });
        }
        sets.union(src, dst);
    }
    Ok(label_components(&mut sets, num_nodes))
}

pub(crate) fn label_components(sets: &mut UnionFind, num_nodes: usize) -> ClusterAssignment {
    let mut label = vec![usize::MAX; num_nodes];
    let mut assignment = Vec::with_capacity(num_nodes);
    let mut next = 0;
    for node in 0..num_nodes {
        let root = sets.find(node);
        if label[root] == usize::MAX {
            label[root] = next;
            next += 1;
        }
        assignment.push(label[root]);
    }
    ClusterAssignment {
        num_clusters: next,
        assignment,
    }
}
