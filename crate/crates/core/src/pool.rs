//! Edge-based graph component pooling.
//!
//! Every directed edge gets a learned score from the concatenated features of
//! its endpoints. Edges scoring above a threshold are merge candidates, their
//! weakly connected components become supernodes, and the coarse features are
//! weighted sums of member features with the edge scores as weights:
//!
//! ```text
//! S_ij = σ(ψ · (x_i ‖ x_j) + b)
//! E_m  = { ⟨i,j⟩ : S_ij > t }
//! W_ij = S_ij if ⟨i,j⟩ ∈ E_m, 1 if i = j and i touches no merge edge, else 0
//! X'   = (W C)ᵀ X,   A' = min(Cᵀ A C, 1)
//! ```
//!
//! Everything is computed over the sparse edge list in time linear in
//! `|V| + |E|` (times the feature width).

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::components::{connected_components, ClusterAssignment};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, Edge, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Logistic,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// `σ'(z)` expressed through `s = σ(z)`.
    pub fn derivative_from_output(self, s: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - s * s,
            Activation::Logistic => s * (1.0 - s),
            Activation::Identity => 1.0,
        }
    }

    /// Least upper bound of the activation's range.
    pub fn supremum(self) -> f64 {
        match self {
            Activation::Tanh | Activation::Logistic => 1.0,
            Activation::Identity => f64::INFINITY,
        }
    }
}

/// Linear edge scorer `σ(ψ · (x_i ‖ x_j) + b)` with its merge threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScorer {
    /// `ψ`, length `2d`: the first half multiplies the source features.
    pub weight: Vec<f64>,
    pub bias: f64,
    pub activation: Activation,
    pub threshold: f64,
}

impl EdgeScorer {
    pub fn new(weight: Vec<f64>, bias: f64, activation: Activation, threshold: f64) -> Self {
        Self {
            weight,
            bias,
            activation,
            threshold,
        }
    }

    /// Fan-in uniform initialisation in `±1/√(2d)`, zero bias, tanh with `t = 0`.
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((2 * feature_dim).max(1) as f64).sqrt();
        let weight = (0..2 * feature_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self::new(weight, 0.0, Activation::Tanh, 0.0)
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.len() / 2
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.weight.len() != 2 * dim {
            return Err(Error::shape(
                "edge scorer weight",
                format!("length {}", 2 * dim),
                format!("length {}", self.weight.len()),
            ));
        }
        Ok(())
    }

    fn source_weight(&self) -> &[f64] {
        &self.weight[..self.feature_dim()]
    }

    fn target_weight(&self) -> &[f64] {
        &self.weight[self.feature_dim()..]
    }
}

/// Where an entry of the weight matrix comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightSource {
    /// Constant `1` on the diagonal of an unmerged node.
    Unit,
    /// The score of the edge at this index in the scored edge list.
    Score(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub source: WeightSource,
}

/// Sparse `m × m` weight matrix in row-major coordinate form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    num_nodes: usize,
    entries: Vec<WeightEntry>,
}

impl WeightMatrix {
    /// Entries must be sorted by `(row, col)` with no repeated position.
    pub fn from_entries(num_nodes: usize, entries: Vec<WeightEntry>) -> Result<Self> {
        if let Some(e) = entries
            .iter()
            .find(|e| e.row >= num_nodes || e.col >= num_nodes)
        {
            return Err(Error::InvalidEdge {
                src: e.row,
                dst: e.col,
                num_nodes,
            });
        }
        if entries
            .windows(2)
            .any(|w| (w[0].row, w[0].col) >= (w[1].row, w[1].col))
        {
            return Err(Error::Usage(
                "weight entries must be sorted by (row, col) without repeats".into(),
            ));
        }
        Ok(Self { num_nodes, entries })
    }

    pub fn identity(num_nodes: usize) -> Self {
        let entries = (0..num_nodes)
            .map(|i| WeightEntry {
                row: i,
                col: i,
                value: 1.0,
                source: WeightSource::Unit,
            })
            .collect();
        Self { num_nodes, entries }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.row, e.col).cmp(&(row, col)))
            .map(|pos| self.entries[pos].value)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.num_nodes, self.num_nodes));
        for e in &self.entries {
            dense[[e.row, e.col]] = e.value;
        }
        dense
    }
}

/// Scored edges, the selected merge subset and the resulting weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeSelection {
    /// Every scored directed edge, in the input graph's sorted order.
    pub edges: Vec<Edge>,
    /// `scores[e]` belongs to `edges[e]`.
    pub scores: Vec<f64>,
    /// Ascending indices into `edges` of the merge edges.
    pub merge_edges: Vec<usize>,
    pub weights: WeightMatrix,
}

impl MergeSelection {
    pub fn merge_edge_pairs(&self) -> Vec<Edge> {
        self.merge_edges.iter().map(|&e| self.edges[e]).collect()
    }
}

/// Output of a pooling call together with what backward and unpool need.
#[derive(Debug, Clone)]
pub struct PoolResult {
    pub coarse: Graph,
    pub assignment: ClusterAssignment,
    pub selection: MergeSelection,
    pub(crate) input_features: Array2<f64>,
    pub(crate) scorer: EdgeScorer,
}

/// Gradients produced by [`pool_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoolGradients {
    pub features: Array2<f64>,
    pub weight: Vec<f64>,
    pub bias: f64,
}

/// JSON debug view of a pooling call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolDump {
    pub num_nodes: usize,
    pub num_clusters: usize,
    pub assignment: Vec<usize>,
    pub merge_edges: Vec<ScoredEdge>,
    pub coarse_edges: Vec<Edge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub src: usize,
    pub dst: usize,
    pub score: f64,
}

impl PoolResult {
    pub fn input_features(&self) -> &Array2<f64> {
        &self.input_features
    }

    pub fn scorer(&self) -> &EdgeScorer {
        &self.scorer
    }

    pub fn dump(&self) -> PoolDump {
        PoolDump {
            num_nodes: self.assignment.num_nodes(),
            num_clusters: self.assignment.num_clusters(),
            assignment: self.assignment.assignment().to_vec(),
            merge_edges: self
                .selection
                .merge_edges
                .iter()
                .map(|&e| ScoredEdge {
                    src: self.selection.edges[e].0,
                    dst: self.selection.edges[e].1,
                    score: self.selection.scores[e],
                })
                .collect(),
            coarse_edges: self.coarse.edges().to_vec(),
        }
    }

    /// Rebuilds a graph on the original nodes and edges whose features are
    /// copied from the supernodes.
    pub fn unpool_graph(&self, coarse_features: ArrayView2<'_, f64>) -> Result<Graph> {
        let features = unpool(self, coarse_features)?;
        let adjacency =
            Adjacency::from_sorted_unique(self.assignment.num_nodes(), self.selection.edges.clone());
        Graph::new(adjacency, features, self.coarse.label)
    }
}

/// Scores every directed edge of `graph`; entry `e` belongs to `graph.edges()[e]`.
pub fn score_edges(graph: &Graph, scorer: &EdgeScorer) -> Result<Vec<f64>> {
    score_edges_with(&graph.adjacency, graph.features.view(), scorer)
}

pub fn score_edges_with(
    adjacency: &Adjacency,
    features: ArrayView2<'_, f64>,
    scorer: &EdgeScorer,
) -> Result<Vec<f64>> {
    scorer.check_dim(features.ncols())?;
    if features.nrows() != adjacency.num_nodes() {
        return Err(Error::shape(
            "pool features",
            format!("{} rows", adjacency.num_nodes()),
            format!("{} rows", features.nrows()),
        ));
    }
    // ψ · (x_i ‖ x_j) splits into a per-source and a per-target projection.
    let project = |w: &[f64]| -> Vec<f64> {
        features
            .outer_iter()
            .map(|x| x.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    };
    let from_source = project(scorer.source_weight());
    let from_target = project(scorer.target_weight());
    Ok(adjacency
        .edges()
        .iter()
        .map(|&(i, j)| {
            scorer
                .activation
                .apply(from_source[i] + from_target[j] + scorer.bias)
        })
        .collect())
}

/// Indices of the scores strictly above `threshold`.
pub fn select_merge_edges(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > threshold)
        .map(|(e, _)| e)
        .collect()
}

/// Weight matrix over `edges` given their scores and the merge subset.
///
/// `merge_edges` are ascending indices into `edges`, which are sorted.
pub fn build_weight_matrix(
    num_nodes: usize,
    edges: &[Edge],
    scores: &[f64],
    merge_edges: &[usize],
) -> Result<WeightMatrix> {
    if scores.len() != edges.len() {
        return Err(Error::shape("edge scores", edges.len(), scores.len()));
    }
    let mut touched = vec![false; num_nodes];
    for &e in merge_edges {
        let &(i, j) = edges
            .get(e)
            .ok_or_else(|| Error::Usage(format!("merge edge index {e} out of range")))?;
        touched[i] = true;
        touched[j] = true;
    }
    let mut entries = Vec::with_capacity(merge_edges.len() + num_nodes);
    let mut cursor = 0;
    for (node, &merged) in touched.iter().enumerate() {
        if !merged {
            entries.push(WeightEntry {
                row: node,
                col: node,
                value: 1.0,
                source: WeightSource::Unit,
            });
        }
        while cursor < merge_edges.len() && edges[merge_edges[cursor]].0 == node {
            let e = merge_edges[cursor];
            entries.push(WeightEntry {
                row: node,
                col: edges[e].1,
                value: scores[e],
                source: WeightSource::Score(e),
            });
            cursor += 1;
        }
    }
    WeightMatrix::from_entries(num_nodes, entries)
}

/// Coarsens `graph` with cluster assignment `C` and weights `W`.
pub fn coarsen(graph: &Graph, assignment: &ClusterAssignment, weights: &WeightMatrix) -> Result<Graph> {
    let (adjacency, features) =
        coarsen_parts(&graph.adjacency, graph.features.view(), assignment, weights)?;
    Graph::new(adjacency, features, graph.label)
}

pub fn coarsen_parts(
    adjacency: &Adjacency,
    features: ArrayView2<'_, f64>,
    assignment: &ClusterAssignment,
    weights: &WeightMatrix,
) -> Result<(Adjacency, Array2<f64>)> {
    let m = adjacency.num_nodes();
    if assignment.num_nodes() != m || features.nrows() != m {
        return Err(Error::shape(
            "coarsen",
            format!("{m} nodes"),
            format!(
                "assignment over {} nodes, {} feature rows",
                assignment.num_nodes(),
                features.nrows()
            ),
        ));
    }
    if weights.num_nodes() != m {
        return Err(Error::shape("weight matrix", m, weights.num_nodes()));
    }
    Ok((
        coarse_adjacency(adjacency, assignment),
        coarse_features(features, assignment, weights),
    ))
}

/// `X' = (W C)ᵀ X`: entry `W_ij` adds `W_ij · x_i` to the row of `j`'s cluster.
/// Entries are visited in ascending row order.
fn coarse_features(
    features: ArrayView2<'_, f64>,
    assignment: &ClusterAssignment,
    weights: &WeightMatrix,
) -> Array2<f64> {
    let mut out = Array2::zeros((assignment.num_clusters(), features.ncols()));
    for e in weights.entries() {
        let mut row = out.row_mut(assignment.cluster_of(e.col));
        row.scaled_add(e.value, &features.row(e.row));
    }
    out
}

/// `A' = min(Cᵀ A C, 1)` as a sorted edge list, via two counting-sort passes.
fn coarse_adjacency(adjacency: &Adjacency, assignment: &ClusterAssignment) -> Adjacency {
    let k = assignment.num_clusters();
    let mapped: Vec<Edge> = adjacency
        .edges()
        .iter()
        .map(|&(i, j)| (assignment.cluster_of(i), assignment.cluster_of(j)))
        .collect();
    let by_target = counting_sort(&mapped, k, |e| e.1);
    let mut sorted = counting_sort(&by_target, k, |e| e.0);
    sorted.dedup();
    Adjacency::from_sorted_unique(k, sorted)
}

fn counting_sort(edges: &[Edge], buckets: usize, key: impl Fn(&Edge) -> usize) -> Vec<Edge> {
    let mut start = vec![0usize; buckets + 1];
    for e in edges {
        start[key(e) + 1] += 1;
    }
    for b in 0..buckets {
        start[b + 1] += start[b];
    }
    let mut out = vec![(0, 0); edges.len()];
    for e in edges {
        let slot = &mut start[key(e)];
        out[*slot] = *e;
        *slot += 1;
    }
    out
}

/// Full pooling pass: score, select, detect components, weight, coarsen.
pub fn pool(graph: &Graph, scorer: &EdgeScorer) -> Result<PoolResult> {
    let mut result = pool_parts(&graph.adjacency, graph.features.view(), scorer)?;
    result.coarse.label = graph.label;
    Ok(result)
}

pub fn pool_parts(
    adjacency: &Adjacency,
    features: ArrayView2<'_, f64>,
    scorer: &EdgeScorer,
) -> Result<PoolResult> {
    let scores = score_edges_with(adjacency, features, scorer)?;
    let merge_edges = select_merge_edges(&scores, scorer.threshold);
    let merge_pairs: Vec<Edge> = merge_edges.iter().map(|&e| adjacency.edges()[e]).collect();
    let assignment = connected_components(adjacency.num_nodes(), &merge_pairs)?;
    let weights = build_weight_matrix(
        adjacency.num_nodes(),
        adjacency.edges(),
        &scores,
        &merge_edges,
    )?;
    finish_pool(adjacency, features, scorer, scores, merge_edges, assignment, weights)
}

pub(crate) fn finish_pool(
    adjacency: &Adjacency,
    features: ArrayView2<'_, f64>,
    scorer: &EdgeScorer,
    scores: Vec<f64>,
    merge_edges: Vec<usize>,
    assignment: ClusterAssignment,
    weights: WeightMatrix,
) -> Result<PoolResult> {
    let (coarse_adj, coarse_x) = coarsen_parts(adjacency, features, &assignment, &weights)?;
    Ok(PoolResult {
        coarse: Graph::new(coarse_adj, coarse_x, None)?,
        assignment,
        selection: MergeSelection {
            edges: adjacency.edges().to_vec(),
            scores,
            merge_edges,
            weights,
        },
        input_features: features.to_owned(),
        scorer: scorer.clone(),
    })
}

/// Copies each supernode's feature row back to all of its member nodes.
pub fn unpool(result: &PoolResult, coarse_features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let k = result.assignment.num_clusters();
    if coarse_features.nrows() != k {
        return Err(Error::shape(
            "unpool features",
            format!("{k} rows"),
            format!("{} rows", coarse_features.nrows()),
        ));
    }
    Ok(coarse_features.select(Axis(0), result.assignment.assignment()))
}

/// Backpropagates `∂L/∂X'` through `X' = (W C)ᵀ X`.
///
/// Merge selection and cluster membership are constants of the forward pass;
/// gradients reach the scorer only through the score-valued entries of `W`,
/// and reach the input features both directly and through those scores.
pub fn pool_backward(result: &PoolResult, upstream: ArrayView2<'_, f64>) -> Result<PoolGradients> {
    let x = &result.input_features;
    let (m, d) = x.dim();
    let k = result.assignment.num_clusters();
    if upstream.dim() != (k, d) {
        return Err(Error::shape(
            "pool upstream gradient",
            format!("{k}×{d}"),
            format!("{}×{}", upstream.nrows(), upstream.ncols()),
        ));
    }
    let selection = &result.selection;
    let mut grad_x = Array2::zeros((m, d));
    let mut grad_score = vec![0.0; selection.edges.len()];
    for e in selection.weights.entries() {
        let g = upstream.row(result.assignment.cluster_of(e.col));
        grad_x.row_mut(e.row).scaled_add(e.value, &g);
        if let WeightSource::Score(edge) = e.source {
            grad_score[edge] += g.dot(&x.row(e.row));
        }
    }

    let scorer = &result.scorer;
    let (w_src, w_dst) = (scorer.source_weight(), scorer.target_weight());
    let mut grad_w = vec![0.0; 2 * d];
    let mut grad_b = 0.0;
    for &edge in &selection.merge_edges {
        let upstream_score = grad_score[edge];
        if upstream_score == 0.0 {
            continue;
        }
        let dz = upstream_score * scorer
            .activation
            .derivative_from_output(selection.scores[edge]);
        let (i, j) = selection.edges[edge];
        for c in 0..d {
            grad_w[c] += dz * x[[i, c]];
            grad_w[d + c] += dz * x[[j, c]];
            grad_x[[i, c]] += dz * w_src[c];
            grad_x[[j, c]] += dz * w_dst[c];
        }
        grad_b += dz;
    }
    Ok(PoolGradients {
        features: grad_x,
        weight: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    use super::*;
    use crate::graph::build_graph;

    fn triangle() -> Graph {
        build_graph(3, [(0, 1), (1, 2), (2, 0)], array![[1.0], [2.0], [3.0]], None).unwrap()
    }

    #[test]
    fn zero_scorer_scores_zero() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.0, 0.0], 0.0, Activation::Tanh, 0.0);
        assert!(score_edges(&g, &s).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_node_score() {
        let g = build_graph(2, [(0, 1)], array![[0.5], [0.25]], None).unwrap();
        let s = EdgeScorer::new(vec![1.0, 1.0], 0.0, Activation::Tanh, 0.0);
        let scores = score_edges(&g, &s).unwrap();
        assert_eq!(g.edges()[0], (0, 1));
        assert_abs_diff_eq!(scores[0], 0.75f64.tanh(), epsilon = 1e-15);
        assert_abs_diff_eq!(scores[0], 0.63515, epsilon = 1e-5);
    }

    #[test]
    fn saturated_bias_blocks_merges() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.3, -0.2], -1e6, Activation::Tanh, 0.0);
        let scores = score_edges(&g, &s).unwrap();
        assert!(scores.iter().all(|&v| (v + 1.0).abs() < 1e-12));
        assert!(select_merge_edges(&scores, 0.0).is_empty());
    }

    #[test]
    fn scorer_dimension_mismatch() {
        let s = EdgeScorer::new(vec![1.0; 4], 0.0, Activation::Tanh, 0.0);
        assert!(matches!(score_edges(&triangle(), &s), Err(Error::Shape { .. })));
    }

    #[test]
    fn strict_threshold() {
        assert!(select_merge_edges(&[0.0, 0.0], 0.0).is_empty());
        assert_eq!(select_merge_edges(&[-0.999, 0.5], -1.0), vec![0, 1]);
        assert_eq!(select_merge_edges(&[0.4, -0.2, 0.0], 0.0), vec![0]);
    }

    #[test]
    fn weights_without_merges_are_identity() {
        let g = triangle();
        let scores = vec![0.1; g.num_edges()];
        let w = build_weight_matrix(3, g.edges(), &scores, &[]).unwrap();
        assert_eq!(w.to_dense(), Array2::<f64>::eye(3));
    }

    #[test]
    fn triangle_weights() {
        let g = triangle();
        let e01 = g.adjacency.edge_index((0, 1)).unwrap();
        let e10 = g.adjacency.edge_index((1, 0)).unwrap();
        let mut scores = vec![-0.5; g.num_edges()];
        scores[e01] = 0.5;
        scores[e10] = 0.3;
        let w = build_weight_matrix(3, g.edges(), &scores, &[e01, e10]).unwrap();
        let expected = array![[0.0, 0.5, 0.0], [0.3, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(w.to_dense(), expected);
    }

    #[test]
    fn incoming_merge_edge_marks_node_merged() {
        let g = build_graph(2, [(0, 1)], array![[1.0], [1.0]], None).unwrap();
        let e10 = g.adjacency.edge_index((1, 0)).unwrap();
        let scores = vec![0.7; 2];
        let w = build_weight_matrix(2, g.edges(), &scores, &[e10]).unwrap();
        assert_eq!(w.get(0, 0), 0.0);
        assert_eq!(w.get(1, 1), 0.0);
        assert_eq!(w.get(1, 0), 0.7);
    }

    #[test]
    fn identity_coarsening() {
        let g = triangle();
        let c = coarsen(&g, &ClusterAssignment::identity(3), &WeightMatrix::identity(3)).unwrap();
        assert_eq!(c, g);
    }

    #[test]
    fn triangle_coarsening() {
        let g = triangle();
        let e01 = g.adjacency.edge_index((0, 1)).unwrap();
        let e10 = g.adjacency.edge_index((1, 0)).unwrap();
        let mut scores = vec![-0.5; g.num_edges()];
        scores[e01] = 0.5;
        scores[e10] = 0.3;
        let w = build_weight_matrix(3, g.edges(), &scores, &[e01, e10]).unwrap();
        let c = ClusterAssignment::new(2, vec![0, 0, 1]).unwrap();
        let coarse = coarsen(&g, &c, &w).unwrap();
        assert_abs_diff_eq!(coarse.features, array![[1.1], [3.0]], epsilon = 1e-15);
        assert_eq!(coarse.edges(), &[(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn full_merge_collapses_to_one_supernode() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.0, 0.0], 0.5, Activation::Tanh, 0.0);
        let r = pool(&g, &s).unwrap();
        assert_eq!(r.assignment.num_clusters(), 1);
        assert_eq!(r.coarse.edges(), &[(0, 0)]);
        // every node has two outgoing merge edges weighted tanh(0.5)
        let w = 0.5f64.tanh();
        assert_abs_diff_eq!(r.coarse.features[[0, 0]], 2.0 * w * 6.0, epsilon = 1e-12);
    }

    #[test]
    fn high_threshold_is_identity() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.7, 0.2], 0.1, Activation::Tanh, 1.0);
        let r = pool(&g, &s).unwrap();
        assert_eq!(r.coarse.num_nodes(), 3);
        assert_eq!(r.coarse.features, g.features);
        assert_eq!(r.coarse.edges(), g.edges());
    }

    #[test]
    fn empty_pool() {
        let g = build_graph(0, [], Array2::zeros((0, 2)), None).unwrap();
        let s = EdgeScorer::new(vec![0.1; 4], 0.0, Activation::Tanh, 0.0);
        let r = pool(&g, &s).unwrap();
        assert_eq!(r.coarse.num_nodes(), 0);
        assert_eq!(r.coarse.feature_dim(), 2);
    }

    #[test]
    fn unpool_copies_rows() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.0, 0.0], -1.0, Activation::Tanh, 0.0);
        let r = pool(&g, &s).unwrap();
        let back = unpool(&r, r.coarse.features.view()).unwrap();
        assert_eq!(back, g.features);

        let mut r = r;
        r.assignment = ClusterAssignment::new(2, vec![0, 0, 1]).unwrap();
        let back = unpool(&r, array![[7.0], [9.0]].view()).unwrap();
        assert_eq!(back, array![[7.0], [7.0], [9.0]]);
        assert!(unpool(&r, array![[1.0]].view()).is_err());
        let restored = r.unpool_graph(array![[7.0], [9.0]].view()).unwrap();
        assert_eq!(restored.edges(), g.edges());
    }

    #[test]
    fn backward_zero_upstream() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.4, 0.1], 0.2, Activation::Tanh, 0.0);
        let r = pool(&g, &s).unwrap();
        let up = Array2::zeros(r.coarse.features.raw_dim());
        let grads = pool_backward(&r, up.view()).unwrap();
        assert!(grads.features.iter().all(|&v| v == 0.0));
        assert!(grads.weight.iter().all(|&v| v == 0.0));
        assert_eq!(grads.bias, 0.0);
    }

    #[test]
    fn backward_without_merges_routes_through_assignment() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.4, 0.1], -5.0, Activation::Tanh, 0.0);
        let r = pool(&g, &s).unwrap();
        let up = array![[1.0], [-2.0], [3.0]];
        let grads = pool_backward(&r, up.view()).unwrap();
        assert_eq!(grads.features, up);
        assert_eq!(grads.weight, vec![0.0, 0.0]);
        assert_eq!(grads.bias, 0.0);
        assert!(pool_backward(&r, array![[1.0]].view()).is_err());
    }

    #[test]
    fn dump_lists_merge_edges() {
        let g = triangle();
        let s = EdgeScorer::new(vec![0.0, 0.0], 0.5, Activation::Tanh, 0.0);
        let dump = pool(&g, &s).unwrap().dump();
        assert_eq!(dump.merge_edges.len(), 6);
        assert_eq!(dump.assignment, vec![0, 0, 0]);
        let json = serde_json::to_string(&dump).unwrap();
        assert!(json.contains("\"coarse_edges\":[[0,0]]"));
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Logistic.apply(0.0), 0.5);
        assert_eq!(Activation::Identity.derivative_from_output(3.0), 1.0);
        assert_eq!(Activation::Tanh.derivative_from_output(0.0), 1.0);
        assert_eq!(Activation::Identity.supremum(), f64::INFINITY);
    }
}
