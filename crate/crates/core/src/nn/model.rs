//! Layer-string models (`C`onvolution, `P`ool, `L`inear) with a hand-written
//! reverse pass.
//!
//! Graphs are batched as a disjoint union; a membership vector maps every node
//! to its graph so the sum readout between the last graph layer and the first
//! linear layer can segment per graph. Pooling never merges across graphs
//! because components cannot span disconnected pieces.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::layers::{
    add_bias, cross_entropy_loss, dropout_mask, propagate, propagate_transpose, segment_sum,
    DenseActivation, GcnNorm,
};
use super::param::Parameter;
use crate::container::Container;
use crate::edgepool::edgepool_parts;
use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};
use crate::pool::{pool_backward, pool_parts, Activation, EdgeScorer, PoolResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolOperator {
    #[default]
    Component,
    Edgepool,
    None,
}

impl fmt::Display for PoolOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolOperator::Component => "component",
            PoolOperator::Edgepool => "edgepool",
            PoolOperator::None => "none",
        })
    }
}

impl FromStr for PoolOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "component" | "component-pool" => Ok(PoolOperator::Component),
            "edgepool" | "edge-pool" => Ok(PoolOperator::Edgepool),
            "none" => Ok(PoolOperator::None),
            other => Err(Error::Config(format!("unknown pooling operator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Pool,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Layers left to right, e.g. `CPCL`.
    pub architecture: String,
    pub hidden_size: usize,
    pub dropout: f64,
    pub num_classes: usize,
    pub input_dim: usize,
    pub operator: PoolOperator,
}

impl ModelConfig {
    /// Parses and validates the architecture: graph layers (`C`, `P`) first,
    /// then at least one `L`.
    pub fn layer_kinds(&self) -> Result<Vec<LayerKind>> {
        if self.architecture.is_empty() {
            return Err(Error::Config("architecture is empty".into()));
        }
        let kinds = self
            .architecture
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'C' => Ok(LayerKind::Conv),
                'P' => Ok(LayerKind::Pool),
                'L' => Ok(LayerKind::Linear),
                other => Err(Error::Config(format!("unknown layer letter {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let first_linear = kinds
            .iter()
            .position(|&k| k == LayerKind::Linear)
            .ok_or_else(|| Error::Config("architecture needs a final L layer".into()))?;
        if kinds[first_linear..].iter().any(|&k| k != LayerKind::Linear) {
            return Err(Error::Config(
                "graph layers (C, P) must precede all L layers".into(),
            ));
        }
        if self.operator == PoolOperator::None && kinds.contains(&LayerKind::Pool) {
            return Err(Error::Config(
                "architecture has a P layer but the pooling operator is none".into(),
            ));
        }
        Ok(kinds)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_kinds()?;
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.hidden_size == 0 || self.input_dim == 0 {
            return Err(Error::Config("hidden size and input dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// One sigmoid unit for binary tasks, one softmax unit per class otherwise.
    pub fn output_width(&self) -> usize {
        if self.num_classes == 2 {
            1
        } else {
            self.num_classes
        }
    }

    /// The same model with every `P` removed and no pooling operator.
    pub fn without_pooling(&self) -> ModelConfig {
        ModelConfig {
            architecture: self.architecture.replace(['P', 'p'], ""),
            operator: PoolOperator::None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv {
        weight: Parameter,
        bias: Parameter,
    },
    Pool {
        weight: Parameter,
        bias: Parameter,
    },
    Dense {
        weight: Parameter,
        bias: Parameter,
        activation: DenseActivation,
    },
}

impl Layer {
    fn parameters(&self) -> [&Parameter; 2] {
        match self {
            Layer::Conv { weight, bias }
            | Layer::Pool { weight, bias }
            | Layer::Dense { weight, bias, .. } => [weight, bias],
        }
    }

    fn parameters_mut(&mut self) -> [&mut Parameter; 2] {
        match self {
            Layer::Conv { weight, bias }
            | Layer::Pool { weight, bias }
            | Layer::Dense { weight, bias, .. } => [weight, bias],
        }
    }
}

/// Disjoint union of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub adjacency: Adjacency,
    pub features: Array2<f64>,
    /// Graph index of every node.
    pub membership: Vec<usize>,
    pub num_graphs: usize,
    /// Present when every graph carries a label.
    pub labels: Option<Vec<usize>>,
}

impl Batch {
    pub fn new(graphs: &[&Graph]) -> Result<Self> {
        let Some(first) = graphs.first() else {
            return Err(Error::Usage("cannot batch zero graphs".into()));
        };
        let dim = first.feature_dim();
        let mut edges = Vec::with_capacity(graphs.iter().map(|g| g.num_edges()).sum());
        let mut membership = Vec::new();
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            if g.feature_dim() != dim {
                return Err(Error::shape("batch feature dimension", dim, g.feature_dim()));
            }
            edges.extend(g.edges().iter().map(|&(s, d)| (s + offset, d + offset)));
            membership.extend(std::iter::repeat_n(gi, g.num_nodes()));
            offset += g.num_nodes();
        }
        let views: Vec<ArrayView2<'_, f64>> = graphs.iter().map(|g| g.features.view()).collect();
        let features = concatenate(Axis(0), &views).map_err(|e| Error::Usage(e.to_string()))?;
        let labels = graphs.iter().map(|g| g.label).collect();
        Ok(Self {
            adjacency: Adjacency::from_sorted_unique(offset, edges),
            features,
            membership,
            num_graphs: graphs.len(),
            labels,
        })
    }
}

struct Level {
    adjacency: Adjacency,
    norm: Option<GcnNorm>,
    membership: Vec<usize>,
}

impl Level {
    fn new(adjacency: Adjacency, membership: Vec<usize>) -> Self {
        Self {
            adjacency,
            norm: None,
            membership,
        }
    }

    fn propagate(&mut self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let norm = self
            .norm
            .get_or_insert_with(|| GcnNorm::new(&self.adjacency));
        propagate(&self.adjacency, norm, h)
    }
}

enum Step {
    Conv {
        layer: usize,
        level: usize,
        input: Array2<f64>,
        output: Array2<f64>,
        mask: Option<Array2<f64>>,
    },
    Pool {
        layer: usize,
        result: Box<PoolResult>,
    },
    Readout {
        level: usize,
    },
    Dense {
        layer: usize,
        input: Array2<f64>,
        output: Array2<f64>,
        mask: Option<Array2<f64>>,
        is_output: bool,
    },
}

struct Trace {
    levels: Vec<Level>,
    steps: Vec<Step>,
    /// Model output before it is widened to two columns for binary tasks.
    raw_output: Array2<f64>,
}

/// Result of a forward pass. Training passes keep the intermediates needed
/// by [`Model::backward`]; inference passes do not.
pub struct ForwardPass {
    /// One probability row per graph.
    pub probabilities: Array2<f64>,
    labels: Option<Vec<usize>>,
    trace: Option<Trace>,
}

impl ForwardPass {
    pub fn loss(&self) -> Result<f64> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Usage("batch has unlabeled graphs".into()))?;
        cross_entropy_loss(self.probabilities.view(), labels)
    }

    /// Class 1 iff its probability exceeds 0.5 for binary tasks, argmax otherwise.
    pub fn predicted_classes(&self) -> Vec<usize> {
        predicted_classes(self.probabilities.view())
    }

    pub fn has_trace(&self) -> bool {
        self.trace.is_some()
    }
}

pub fn predicted_classes(probabilities: ArrayView2<'_, f64>) -> Vec<usize> {
    probabilities
        .outer_iter()
        .map(|row| {
            if row.len() == 2 {
                usize::from(row[1] > 0.5)
            } else {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                        if p > best.1 {
                            (i, p)
                        } else {
                            best
                        }
                    })
                    .0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

impl Model {
    /// Glorot-uniform dense and convolution weights, zero biases, and
    /// fan-in uniform pooling scorers.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let kinds = config.layer_kinds()?;
        let last = kinds.len() - 1;
        let mut width = config.input_dim;
        let mut layers = Vec::with_capacity(kinds.len());
        for (idx, kind) in kinds.into_iter().enumerate() {
            let layer = match kind {
                LayerKind::Conv => {
                    let h = config.hidden_size;
                    let layer = Layer::Conv {
                        weight: Parameter::new(format!("{idx}.conv.weight"), glorot(width, h, rng)),
                        bias: Parameter::new(format!("{idx}.conv.bias"), Array2::zeros((1, h))),
                    };
                    width = h;
                    layer
                }
                LayerKind::Pool => {
                    let scorer = EdgeScorer::init(width, rng);
                    let weight = Array2::from_shape_vec((1, 2 * width), scorer.weight)
                        .expect("scorer weight has length 2 * width");
                    Layer::Pool {
                        weight: Parameter::new(format!("{idx}.pool.weight"), weight),
                        bias: Parameter::new(format!("{idx}.pool.bias"), Array2::zeros((1, 1))),
                    }
                }
                LayerKind::Linear => {
                    let (out, activation) = if idx == last {
                        let act = if config.num_classes == 2 {
                            DenseActivation::Sigmoid
                        } else {
                            DenseActivation::Softmax
                        };
                        (config.output_width(), act)
                    } else {
                        (config.hidden_size, DenseActivation::Relu)
                    };
                    let layer = Layer::Dense {
                        weight: Parameter::new(format!("{idx}.linear.weight"), glorot(width, out, rng)),
                        bias: Parameter::new(format!("{idx}.linear.bias"), Array2::zeros((1, out))),
                        activation,
                    };
                    width = out;
                    layer
                }
            };
            layers.push(layer);
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameter> {
        self.layers.iter().flat_map(|l| l.parameters())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map(Parameter::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().for_each(Parameter::zero_grad);
    }

    /// Forward pass that records intermediates for [`Model::backward`].
    ///
    /// Dropout is applied only when `dropout_rng` is given and the rate is
    /// positive.
    pub fn forward(&self, batch: &Batch, dropout_rng: Option<&mut dyn RngCore>) -> Result<ForwardPass> {
        self.run(batch, dropout_rng, true)
    }

    /// Forward pass without dropout and without recorded intermediates.
    pub fn infer(&self, batch: &Batch) -> Result<ForwardPass> {
        self.run(batch, None, false)
    }

    fn run(
        &self,
        batch: &Batch,
        mut rng: Option<&mut dyn RngCore>,
        record: bool,
    ) -> Result<ForwardPass> {
        if batch.features.ncols() != self.config.input_dim {
            return Err(Error::shape(
                "model input",
                format!("{} features", self.config.input_dim),
                format!("{} features", batch.features.ncols()),
            ));
        }
        let rate = self.config.dropout;
        let mut drop = |shape: (usize, usize)| -> Option<Array2<f64>> {
            match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => Some(dropout_mask(shape, rate, r)),
                _ => None,
            }
        };

        let mut levels = vec![Level::new(batch.adjacency.clone(), batch.membership.clone())];
        let mut steps = Vec::new();
        let mut h = batch.features.clone();
        let mut on_nodes = true;
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { weight, bias } => {
                    let level = levels.len() - 1;
                    let lvl = &mut levels[level];
                    let xw = h.dot(&weight.value);
                    let mut z = lvl.propagate(xw.view());
                    add_bias(&mut z, bias.value.as_slice().expect("contiguous bias"));
                    let output = DenseActivation::Relu.apply(z);
                    let mask = drop(output.dim());
                    let next = match &mask {
                        Some(m) => &output * m,
                        None => output.clone(),
                    };
                    if record {
                        steps.push(Step::Conv {
                            layer: idx,
                            level,
                            input: std::mem::replace(&mut h, next),
                            output,
                            mask,
                        });
                    } else {
                        h = next;
                    }
                }
                Layer::Pool { weight, bias } => {
                    let scorer = EdgeScorer::new(
                        weight.value.iter().copied().collect(),
                        bias.value[[0, 0]],
                        Activation::Tanh,
                        0.0,
                    );
                    let lvl = levels.last().expect("at least one level");
                    let result = match self.config.operator {
                        PoolOperator::Component => pool_parts(&lvl.adjacency, h.view(), &scorer)?,
                        PoolOperator::Edgepool => {
                            edgepool_parts(&lvl.adjacency, h.view(), &scorer)?.0
                        }
                        PoolOperator::None => unreachable!("validated at construction"),
                    };
                    let mut membership = vec![0; result.assignment.num_clusters()];
                    for (node, &c) in result.assignment.assignment().iter().enumerate() {
                        membership[c] = lvl.membership[node];
                    }
                    levels.push(Level::new(result.coarse.adjacency.clone(), membership));
                    h = result.coarse.features.clone();
                    if record {
                        steps.push(Step::Pool {
                            layer: idx,
                            result: Box::new(result),
                        });
                    }
                }
                Layer::Dense {
                    weight,
                    bias,
                    activation,
                } => {
                    if on_nodes {
                        let level = levels.len() - 1;
                        h = segment_sum(h.view(), &levels[level].membership, batch.num_graphs);
                        on_nodes = false;
                        if record {
                            steps.push(Step::Readout { level });
                        }
                    }
                    let mut z = h.dot(&weight.value);
                    add_bias(&mut z, bias.value.as_slice().expect("contiguous bias"));
                    let output = activation.apply(z);
                    let is_output = idx + 1 == self.layers.len();
                    let mask = if is_output { None } else { drop(output.dim()) };
                    let next = match &mask {
                        Some(m) => &output * m,
                        None => output.clone(),
                    };
                    if record {
                        steps.push(Step::Dense {
                            layer: idx,
                            input: std::mem::replace(&mut h, next),
                            output,
                            mask,
                            is_output,
                        });
                    } else {
                        h = next;
                    }
                }
            }
        }

        let probabilities = if self.config.num_classes == 2 {
            let p = h.column(0);
            let mut probs = Array2::zeros((h.nrows(), 2));
            for (mut row, &v) in probs.outer_iter_mut().zip(p.iter()) {
                row[0] = 1.0 - v;
                row[1] = v;
            }
            probs
        } else {
            h.clone()
        };
        Ok(ForwardPass {
            probabilities,
            labels: batch.labels.clone(),
            trace: record.then_some(Trace {
                levels,
                steps,
                raw_output: h,
            }),
        })
    }

    /// Accumulates `∂loss/∂θ` for the mean cross-entropy of `pass` into every
    /// parameter's gradient and returns the loss.
    pub fn backward(&mut self, pass: &ForwardPass) -> Result<f64> {
        let trace = pass
            .trace
            .as_ref()
            .ok_or_else(|| Error::Usage("backward needs a recorded forward pass".into()))?;
        let labels = pass
            .labels
            .as_ref()
            .ok_or_else(|| Error::Usage("backward needs labelled graphs".into()))?;
        let loss = pass.loss()?;
        let graphs = labels.len() as f64;

        // sigmoid/softmax with cross entropy: ∂L/∂z = (p − y) / B
        let mut upstream = trace.raw_output.clone();
        if self.config.num_classes == 2 {
            for (mut row, &y) in upstream.outer_iter_mut().zip(labels) {
                row[0] -= y as f64;
            }
        } else {
            for (mut row, &y) in upstream.outer_iter_mut().zip(labels) {
                row[y] -= 1.0;
            }
        }
        upstream /= graphs;

        for step in trace.steps.iter().rev() {
            match step {
                Step::Dense {
                    layer,
                    input,
                    output,
                    mask,
                    is_output,
                } => {
                    let dz = if *is_output {
                        upstream
                    } else {
                        relu_backward(upstream, output, mask.as_ref())
                    };
                    let Layer::Dense { weight, bias, .. } = &mut self.layers[*layer] else {
                        unreachable!("step/layer mismatch")
                    };
                    weight.grad += &input.t().dot(&dz);
                    bias.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
                    upstream = dz.dot(&weight.value.t());
                }
                Step::Readout { level } => {
                    upstream = upstream.select(Axis(0), &trace.levels[*level].membership);
                }
                Step::Pool { layer, result } => {
                    let grads = pool_backward(result, upstream.view())?;
                    let Layer::Pool { weight, bias } = &mut self.layers[*layer] else {
                        unreachable!("step/layer mismatch")
                    };
                    weight
                        .grad
                        .iter_mut()
                        .zip(&grads.weight)
                        .for_each(|(g, d)| *g += d);
                    bias.grad[[0, 0]] += grads.bias;
                    upstream = grads.features;
                }
                Step::Conv {
                    layer,
                    level,
                    input,
                    output,
                    mask,
                } => {
                    let dz = relu_backward(upstream, output, mask.as_ref());
                    let lvl = &trace.levels[*level];
                    let norm = lvl.norm.as_ref().expect("norm computed in forward");
                    let dxw = propagate_transpose(&lvl.adjacency, norm, dz.view());
                    let Layer::Conv { weight, bias } = &mut self.layers[*layer] else {
                        unreachable!("step/layer mismatch")
                    };
                    weight.grad += &input.t().dot(&dxw);
                    bias.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
                    upstream = dxw.dot(&weight.value.t());
                }
            }
        }
        Ok(loss)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(serde_json::json!({
            "kind": "model",
            "architecture": self.config.architecture,
            "input_dim": self.config.input_dim,
            "hidden_size": self.config.hidden_size,
            "num_classes": self.config.num_classes,
            "dropout": self.config.dropout,
            "operator": self.config.operator,
        }));
        for p in self.parameters() {
            c.push(p.name.clone(), p.value.clone());
        }
        c
    }

    pub fn from_container(container: &Container) -> Result<Self> {
        let header = &container.header;
        if header["kind"] != "model" {
            return Err(Error::Container("not a model checkpoint".into()));
        }
        let config: ModelConfig = serde_json::from_value(header.clone())?;
        // parameters are overwritten below; the seed is irrelevant
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Model::new(config, &mut rng)?;
        for p in model.parameters_mut() {
            let stored = container
                .tensor(&p.name)
                .ok_or_else(|| Error::Container(format!("missing tensor {}", p.name)))?;
            if stored.dim() != p.value.dim() {
                return Err(Error::Container(format!("tensor {} has the wrong shape", p.name)));
            }
            p.value.assign(stored);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

fn relu_backward(
    upstream: Array2<f64>,
    output: &Array2<f64>,
    mask: Option<&Array2<f64>>,
) -> Array2<f64> {
    let mut g = match mask {
        Some(m) => upstream * m,
        None => upstream,
    };
    g.zip_mut_with(output, |g, &o| {
        if o <= 0.0 {
            *g = 0.0;
        }
    });
    g
}
