//! Greedy edge contraction baseline.
//!
//! Edges are visited in order of descending score and contracted whenever both
//! endpoints are still unmatched, until half of the nodes have been absorbed
//! or no candidate remains. Each contracted pair becomes a supernode carrying
//! `S_ij · (x_i + x_j)`; the coarsening itself is shared with [`crate::pool`].

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::components::connected_components;
use crate::error::Result;
use crate::graph::{Adjacency, Edge, Graph};
use crate::pool::{
    finish_pool, score_edges_with, EdgeScorer, PoolResult, WeightEntry, WeightMatrix, WeightSource,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionPlan {
    /// Edge indices by descending score, ties broken by ascending `(i, j)`.
    pub ordered_edges: Vec<usize>,
    /// Contracted edges in the order they were taken.
    pub contracted_edges: Vec<usize>,
    /// Endpoints of the contracted edges; no node appears twice.
    pub contracted_pairs: Vec<Edge>,
    /// Fraction of nodes that ended up in a pair.
    pub merged_fraction: f64,
}

/// Plans the greedy contraction over sorted `edges` with their `scores`.
///
/// The budget is `⌊m/2⌋` contractions; self-loops are never contracted.
pub fn plan_contraction(num_nodes: usize, edges: &[Edge], scores: &[f64]) -> ContractionPlan {
    let mut ordered_edges: Vec<usize> = (0..edges.len()).collect();
    // edges are sorted, so index order is (i, j) order
    ordered_edges.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let budget = num_nodes / 2;
    let mut taken = vec![false; num_nodes];
    let mut contracted_edges = Vec::new();
    let mut contracted_pairs = Vec::new();
    for &e in &ordered_edges {
        if contracted_edges.len() == budget {
            break;
        }
        let (i, j) = edges[e];
        if i == j || taken[i] || taken[j] {
            continue;
        }
        taken[i] = true;
        taken[j] = true;
        contracted_edges.push(e);
        contracted_pairs.push((i, j));
    }
    let merged_fraction = if num_nodes == 0 {
        0.0
    } else {
        2.0 * contracted_pairs.len() as f64 / num_nodes as f64
    };
    ContractionPlan {
        ordered_edges,
        contracted_edges,
        contracted_pairs,
        merged_fraction,
    }
}

pub fn edgepool_contract(graph: &Graph, scorer: &EdgeScorer) -> Result<PoolResult> {
    let (mut result, _) = edgepool_parts(&graph.adjacency, graph.features.view(), scorer)?;
    result.coarse.label = graph.label;
    Ok(result)
}

/// Runs the contraction and returns the plan alongside the pooled graph.
pub fn edgepool_parts(
    adjacency: &Adjacency,
    features: ArrayView2<'_, f64>,
    scorer: &EdgeScorer,
) -> Result<(PoolResult, ContractionPlan)> {
    let m = adjacency.num_nodes();
    let edges = adjacency.edges();
    let scores = score_edges_with(adjacency, features, scorer)?;
    let plan = plan_contraction(m, edges, &scores);
    let assignment = connected_components(m, &plan.contracted_pairs)?;

    let mut paired = vec![false; m];
    let mut entries = Vec::with_capacity(m);
    for &e in &plan.contracted_edges {
        let (i, j) = edges[e];
        paired[i] = true;
        paired[j] = true;
        for (row, col) in [(i, j), (j, i)] {
            entries.push(WeightEntry {
                row,
                col,
                value: scores[e],
                source: WeightSource::Score(e),
            });
        }
    }
    entries.extend(
        paired
            .iter()
            .enumerate()
            .filter(|(_, &p)| !p)
            .map(|(node, _)| WeightEntry {
                row: node,
                col: node,
                value: 1.0,
                source: WeightSource::Unit,
            }),
    );
    entries.sort_by_key(|e| (e.row, e.col));
    let weights = WeightMatrix::from_entries(m, entries)?;

    let mut merge_edges = plan.contracted_edges.clone();
    merge_edges.sort_unstable();
    let result = finish_pool(
        adjacency,
        features,
        scorer,
        scores,
        merge_edges,
        assignment,
        weights,
    )?;
    Ok((result, plan))
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;
    use crate::graph::build_graph;
    use crate::pool::Activation;

    fn scorer(dim: usize) -> EdgeScorer {
        EdgeScorer::new(vec![0.3; 2 * dim], 0.1, Activation::Tanh, 0.0)
    }

    #[test]
    fn single_edge_contracts() {
        let g = build_graph(2, [(0, 1)], array![[1.0], [2.0]], None).unwrap();
        let r = edgepool_contract(&g, &scorer(1)).unwrap();
        assert_eq!(r.assignment.num_clusters(), 1);
        let s = r.selection.scores[0];
        assert!((r.coarse.features[[0, 0]] - s * 3.0).abs() < 1e-12);
    }

    #[test]
    fn edgeless_graph_unchanged() {
        let g = build_graph(3, [], array![[1.0], [2.0], [3.0]], None).unwrap();
        let r = edgepool_contract(&g, &scorer(1)).unwrap();
        assert_eq!(r.coarse, g);
    }

    #[test]
    fn greedy_path_contraction() {
        // path 0-1-2-3; only one direction per pair carries the stated score,
        // the reverse directions score lower than all of them
        let edges = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)];
        let scores = [0.9, 0.1, 0.8, 0.1, 0.7, 0.1];
        let plan = plan_contraction(4, &edges, &scores);
        assert_eq!(plan.contracted_pairs, vec![(0, 1), (2, 3)]);
        assert_eq!(plan.merged_fraction, 1.0);
        assert_eq!(&plan.ordered_edges[..3], &[0, 2, 4]);
    }

    #[test]
    fn ties_prefer_lexicographically_smaller_edges() {
        let edges = [(0, 1), (0, 2), (1, 0), (2, 0)];
        let plan = plan_contraction(3, &edges, &[0.5; 4]);
        assert_eq!(plan.contracted_pairs, vec![(0, 1)]);
    }

    #[test]
    fn budget_is_half_the_nodes() {
        // star: every edge touches the centre, so only one contraction fits
        let g = build_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)], Array2::ones((5, 1)), None)
            .unwrap();
        let (r, plan) = edgepool_parts(&g.adjacency, g.features.view(), &scorer(1)).unwrap();
        assert_eq!(plan.contracted_pairs.len(), 1);
        assert_eq!(r.assignment.num_clusters(), 4);

        // 5-cycle has room for two contractions, exactly ⌊5/2⌋
        let g = build_graph(
            5,
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],
            Array2::ones((5, 1)),
            None,
        )
        .unwrap();
        let r = edgepool_contract(&g, &scorer(1)).unwrap();
        assert_eq!(r.assignment.num_clusters(), 3);
        assert!(r.assignment.cluster_sizes().iter().all(|&s| s <= 2));
    }

    #[test]
    fn self_loops_are_not_contracted() {
        let plan = plan_contraction(2, &[(0, 0), (0, 1)], &[0.9, 0.1]);
        assert_eq!(plan.contracted_pairs, vec![(0, 1)]);
    }
}
