//! Random graph generators for tests, benchmarks and scaling runs.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::{build_graph, Edge, Graph};

/// Every unordered pair (and self-loop, when `self_loops`) is included
/// independently with probability `edge_probability`, then symmetrized.
/// Features are standard normal.
pub fn random_graph<R: Rng + ?Sized>(
    num_nodes: usize,
    edge_probability: f64,
    feature_dim: usize,
    self_loops: bool,
    rng: &mut R,
) -> Graph {
    let mut edges = Vec::new();
    for i in 0..num_nodes {
        let start = if self_loops { i } else { i + 1 };
        for j in start..num_nodes {
            if rng.gen_bool(edge_probability) {
                edges.push((i, j));
            }
        }
    }
    let features = normal_matrix(num_nodes, feature_dim, rng);
    build_graph(num_nodes, edges, features, None).expect("generated edges are in range")
}

/// Sparse graph with `num_edges` uniformly drawn undirected edges (self-loops
/// excluded, duplicates collapse), symmetrized.
pub fn random_sparse_graph<R: Rng + ?Sized>(
    num_nodes: usize,
    num_edges: usize,
    feature_dim: usize,
    rng: &mut R,
) -> Graph {
    let mut edges: Vec<Edge> = Vec::with_capacity(num_edges);
    if num_nodes >= 2 {
        while edges.len() < num_edges {
            let i = rng.gen_range(0..num_nodes);
            let j = rng.gen_range(0..num_nodes);
            if i != j {
                edges.push((i, j));
            }
        }
    }
    let features = normal_matrix(num_nodes, feature_dim, rng);
    build_graph(num_nodes, edges, features, None).expect("generated edges are in range")
}

pub fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Two-class toy benchmark: class 0 graphs are sparse, class 1 graphs are
/// dense, sizes uniform in 6..=14, constant scalar features.
pub fn two_class_graphs<R: Rng + ?Sized>(num_graphs: usize, rng: &mut R) -> Vec<Graph> {
    (0..num_graphs)
        .map(|i| {
            let label = i % 2;
            let m = rng.gen_range(6..=14);
            let p = if label == 0 { 0.15 } else { 0.5 };
            let mut g = random_graph(m, p, 1, false, rng);
            g.features.fill(1.0);
            g.label = Some(label);
            g
        })
        .collect()
}
