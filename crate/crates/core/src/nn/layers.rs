//! Stateless forward kernels and their helpers.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};

/// Floor applied to the probability of the true class before taking its log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenseActivation {
    Identity,
    Relu,
    Sigmoid,
    Softmax,
}

impl DenseActivation {
    pub fn apply(self, mut z: Array2<f64>) -> Array2<f64> {
        match self {
            DenseActivation::Identity => z,
            DenseActivation::Relu => {
                z.mapv_inplace(|v| v.max(0.0));
                z
            }
            DenseActivation::Sigmoid => {
                z.mapv_inplace(sigmoid);
                z
            }
            DenseActivation::Softmax => softmax_rows(z),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    z
}

/// Symmetric normalisation of `Â = A + I`.
///
/// `edge[e]` is `1/√(d̂_i d̂_j)` for edge `e = ⟨i,j⟩` and `self_loop[i]` is the
/// `1/d̂_i` contributed by the added identity.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnNorm {
    pub edge: Vec<f64>,
    pub self_loop: Vec<f64>,
}

impl GcnNorm {
    pub fn new(adjacency: &Adjacency) -> Self {
        let degree: Vec<f64> = (0..adjacency.num_nodes())
            .map(|i| (adjacency.edge_range(i).len() + 1) as f64)
            .collect();
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| d.sqrt().recip()).collect();
        let edge = adjacency
            .edges()
            .iter()
            .map(|&(i, j)| inv_sqrt[i] * inv_sqrt[j])
            .collect();
        let self_loop = degree.iter().map(|d| d.recip()).collect();
        Self { edge, self_loop }
    }
}

/// `D̂^{-1/2} Â D̂^{-1/2} H`.
pub fn propagate(adjacency: &Adjacency, norm: &GcnNorm, h: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for i in 0..adjacency.num_nodes() {
        let mut row = out.row_mut(i);
        row.scaled_add(norm.self_loop[i], &h.row(i));
        for e in adjacency.edge_range(i) {
            row.scaled_add(norm.edge[e], &h.row(adjacency.edges()[e].1));
        }
    }
    out
}

/// Transpose of [`propagate`], used by the backward pass.
pub fn propagate_transpose(
    adjacency: &Adjacency,
    norm: &GcnNorm,
    g: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros(g.raw_dim());
    for i in 0..adjacency.num_nodes() {
        out.row_mut(i).scaled_add(norm.self_loop[i], &g.row(i));
    }
    for (e, &(i, j)) in adjacency.edges().iter().enumerate() {
        out.row_mut(j).scaled_add(norm.edge[e], &g.row(i));
    }
    out
}

fn check_affine(
    context: &'static str,
    features: ArrayView2<'_, f64>,
    weight: ArrayView2<'_, f64>,
    bias: &[f64],
) -> Result<()> {
    if features.ncols() != weight.nrows() {
        return Err(Error::shape(
            context,
            format!("{} input columns", weight.nrows()),
            format!("{} input columns", features.ncols()),
        ));
    }
    if bias.len() != weight.ncols() {
        return Err(Error::shape(
            context,
            format!("bias of length {}", weight.ncols()),
            format!("bias of length {}", bias.len()),
        ));
    }
    Ok(())
}

pub(crate) fn add_bias(z: &mut Array2<f64>, bias: &[f64]) {
    for mut row in z.outer_iter_mut() {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

/// Graph convolution `ReLU(D̂^{-1/2} Â D̂^{-1/2} X W + b)` with `Â = A + I`.
pub fn gcn_layer_forward(
    graph: &Graph,
    features: ArrayView2<'_, f64>,
    weight: ArrayView2<'_, f64>,
    bias: &[f64],
) -> Result<Array2<f64>> {
    check_affine("graph convolution", features, weight, bias)?;
    if features.nrows() != graph.num_nodes() {
        return Err(Error::shape(
            "graph convolution",
            format!("{} rows", graph.num_nodes()),
            format!("{} rows", features.nrows()),
        ));
    }
    let norm = GcnNorm::new(&graph.adjacency);
    let mut z = propagate(&graph.adjacency, &norm, features.dot(&weight).view());
    add_bias(&mut z, bias);
    Ok(DenseActivation::Relu.apply(z))
}

/// `activation(X W + b)`.
pub fn linear_forward(
    features: ArrayView2<'_, f64>,
    weight: ArrayView2<'_, f64>,
    bias: &[f64],
    activation: DenseActivation,
) -> Result<Array2<f64>> {
    check_affine("linear layer", features, weight, bias)?;
    let mut z = features.dot(&weight);
    add_bias(&mut z, bias);
    Ok(activation.apply(z))
}

/// Column-wise sum over all nodes; zero vector for an empty graph.
pub fn global_sum_pool(features: ArrayView2<'_, f64>) -> Array1<f64> {
    features.sum_axis(Axis(0))
}

/// Column-wise sums per segment, where `membership[i]` is the segment of row `i`.
pub fn segment_sum(
    features: ArrayView2<'_, f64>,
    membership: &[usize],
    num_segments: usize,
) -> Array2<f64> {
    let mut out = Array2::zeros((num_segments, features.ncols()));
    for (row, &seg) in features.outer_iter().zip(membership) {
        out.row_mut(seg).scaled_add(1.0, &row);
    }
    out
}

/// Mean negative log-likelihood of the true classes.
///
/// Probabilities below [`PROBABILITY_FLOOR`] are clamped before the log.
pub fn cross_entropy_loss(predictions: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if predictions.nrows() != labels.len() {
        return Err(Error::shape("cross entropy", predictions.nrows(), labels.len()));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &label) in predictions.outer_iter().zip(labels) {
        let p = *row.get(label).ok_or_else(|| {
            Error::Usage(format!("label {label} outside 0..{}", predictions.ncols()))
        })?;
        if p < PROBABILITY_FLOOR {
            debug_assert!(p >= 0.0, "negative probability {p}");
            #[cfg(debug_assertions)]
            eprintln!("cross entropy: true-class probability {p:e} clamped");
        }
        total -= p.max(PROBABILITY_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Inverted dropout mask: entries are `0` or `1/(1-rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 - rate;
    Array2::from_shape_simple_fn(shape, || {
        if rng.gen::<f64>() < keep {
            keep.recip()
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    use super::*;
    use crate::graph::build_graph;

    #[test]
    fn lone_node_convolution() {
        let g = build_graph(1, [], array![[-1.0, 2.0]], None).unwrap();
        let out = gcn_layer_forward(&g, g.features.view(), Array2::eye(2).view(), &[0.0, 0.0])
            .unwrap();
        assert_eq!(out, array![[0.0, 2.0]]);
    }

    #[test]
    fn symmetric_pair_gives_equal_rows() {
        let g = build_graph(2, [(0, 1)], array![[0.3, -0.7], [0.3, -0.7]], None).unwrap();
        let w = array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.5]];
        let out = gcn_layer_forward(&g, g.features.view(), w.view(), &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn path_matches_dense_oracle() {
        let x = array![[1.0], [-2.0], [3.0]];
        let g = build_graph(3, [(0, 1), (1, 2)], x.clone(), None).unwrap();
        let out = gcn_layer_forward(&g, x.view(), array![[1.0]].view(), &[0.0]).unwrap();
        let a_hat = array![[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]];
        let d: Vec<f64> = a_hat.rows().into_iter().map(|r| r.sum()).collect();
        let mut norm = a_hat.clone();
        for i in 0..3 {
            for j in 0..3 {
                norm[[i, j]] /= (d[i] * d[j]).sqrt();
            }
        }
        let expected = norm.dot(&x).mapv(|v: f64| v.max(0.0));
        assert_abs_diff_eq!(out, expected, epsilon = 1e-12);
    }

    #[test]
    fn convolution_shape_errors() {
        let g = build_graph(2, [(0, 1)], Array2::zeros((2, 2)), None).unwrap();
        let bad = gcn_layer_forward(&g, g.features.view(), Array2::zeros((3, 1)).view(), &[0.0]);
        assert!(matches!(bad, Err(Error::Shape { .. })));
        let bad = gcn_layer_forward(&g, g.features.view(), Array2::zeros((2, 1)).view(), &[]);
        assert!(bad.is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = build_graph_directed();
        let norm = GcnNorm::new(&g.adjacency);
        let h = array![[1.0, 2.0], [-1.0, 0.5], [0.25, 3.0]];
        let u = array![[0.3, -1.0], [2.0, 1.0], [-0.5, 0.75]];
        let lhs = (&propagate(&g.adjacency, &norm, h.view()) * &u).sum();
        let rhs = (&h * &propagate_transpose(&g.adjacency, &norm, u.view())).sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    fn build_graph_directed() -> Graph {
        crate::graph::build_graph_with(
            3,
            [(0, 1), (0, 2), (2, 2)],
            Array2::zeros((3, 2)),
            None,
            crate::graph::Symmetry::Directed,
        )
        .unwrap()
    }

    #[test]
    fn linear_identity() {
        let x = array![[1.0, -2.0], [3.5, 4.0]];
        let out = linear_forward(x.view(), Array2::eye(2).view(), &[0.0, 0.0], DenseActivation::Identity)
            .unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn linear_matches_matrix_product() {
        let x = array![[0.1, -0.4, 0.7], [1.2, 0.3, -0.9]];
        let w = array![[0.5, -0.2], [0.1, 0.8], [-0.6, 0.4]];
        let b = [0.05, -0.1];
        let out = linear_forward(x.view(), w.view(), &b, DenseActivation::Identity).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let expected: f64 = (0..3).map(|k| x[[r, k]] * w[[k, c]]).sum::<f64>() + b[c];
                assert_abs_diff_eq!(out[[r, c]], expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn softmax_and_sigmoid() {
        let p = DenseActivation::Softmax.apply(array![[0.0, 0.0]]);
        assert_eq!(p, array![[0.5, 0.5]]);
        let p = DenseActivation::Softmax.apply(array![[1000.0, -3.0, 2.0]]);
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn sum_readout() {
        assert_eq!(global_sum_pool(array![[1.0, 2.0], [3.0, 4.0]].view()), array![4.0, 6.0]);
        assert_eq!(global_sum_pool(Array2::zeros((0, 3)).view()), array![0.0, 0.0, 0.0]);
        let seg = segment_sum(array![[1.0], [2.0], [4.0]].view(), &[1, 0, 1], 3);
        assert_eq!(seg, array![[2.0], [5.0], [0.0]]);
    }

    #[test]
    fn cross_entropy_values() {
        let uniform = cross_entropy_loss(array![[0.5, 0.5]].view(), &[1]).unwrap();
        assert_abs_diff_eq!(uniform, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(cross_entropy_loss(array![[1.0, 0.0]].view(), &[0]).unwrap(), 0.0);
        let l = cross_entropy_loss(array![[0.7, 0.3]].view(), &[0]).unwrap();
        assert_abs_diff_eq!(l, -(0.7f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(l, 0.35667, epsilon = 1e-5);
        let clamped = cross_entropy_loss(array![[1.0, 0.0]].view(), &[1]).unwrap();
        assert_abs_diff_eq!(clamped, -(1e-12f64).ln(), epsilon = 1e-9);
        assert!(cross_entropy_loss(array![[1.0, 0.0]].view(), &[2]).is_err());
    }

    #[test]
    fn dropout_mask_values() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mask = dropout_mask((50, 4), 0.5, &mut rng);
        assert!(mask.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(mask.iter().any(|&v| v == 0.0));
    }
}
