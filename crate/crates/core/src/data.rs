//! TU benchmark text format, node feature synthesis, splits and the dataset
//! cache.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::graph::{build_graph, Adjacency, Edge, Graph, Symmetry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// One-hot node labels followed by continuous node attributes.
    Native,
    /// Every node carries the constant feature 1.
    Scalar,
    /// One-hot encoding of each node's degree.
    Degree,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Native => "native",
            FeatureMode::Scalar => "scalar",
            FeatureMode::Degree => "degree",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(FeatureMode::Native),
            "scalar" | "scalar-one" => Ok(FeatureMode::Scalar),
            "degree" | "degree-one-hot" => Ok(FeatureMode::Degree),
            other => Err(Error::Usage(format!(
                "unknown feature mode {other:?} (expected native, scalar or degree)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_mode: FeatureMode,
    /// Feature columns holding continuous attributes, standardized against
    /// the training split by [`standardize`].
    pub continuous_columns: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label.unwrap_or(0)).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Graph> {
        indices.iter().map(|&i| &self.graphs[i]).collect()
    }

    pub fn statistics(&self) -> DatasetStatistics {
        let n = self.graphs.len().max(1) as f64;
        DatasetStatistics {
            name: self.name.clone(),
            size: self.graphs.len(),
            mean_nodes: self.graphs.iter().map(|g| g.num_nodes() as f64).sum::<f64>() / n,
            // undirected edges, self-loops counted once
            mean_edges: self.graphs.iter().map(|g| undirected_edge_count(g) as f64).sum::<f64>() / n,
            feature_dim: self.feature_dim(),
            num_classes: self.num_classes,
            feature_mode: self.feature_mode,
        }
    }
}

fn undirected_edge_count(g: &Graph) -> usize {
    g.edges().iter().filter(|&&(i, j)| i <= j).count()
}

/// The metadata columns of a benchmark listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStatistics {
    pub name: String,
    pub size: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub feature_mode: FeatureMode,
}

fn dataset_file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    if path.is_file() {
        fs::read_to_string(path).map(Some).map_err(|e| Error::io(path, e))
    } else {
        Ok(None)
    }
}

/// Trimmed, non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_field<T: FromStr>(file: &str, line: usize, field: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::CorruptDataset(format!("{file}:{line}: cannot parse {field:?}")))
}

fn parse_column<T: FromStr>(file: &str, text: &str) -> Result<Vec<T>> {
    lines(text).map(|(n, l)| parse_field(file, n, l)).collect()
}

/// Sorted distinct values mapped to 0..k.
fn compact_labels(raw: &[i64]) -> (BTreeMap<i64, usize>, usize) {
    let map: BTreeMap<i64, usize> = raw
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let k = map.len();
    (map, k)
}

/// Reads `<dir>/<name>_*.txt` into a dataset with native features.
///
/// Graphs without node labels or attributes get the constant feature 1.
pub fn parse_tudataset(dir: &Path, name: &str) -> Result<Dataset> {
    let a_path = dataset_file(dir, name, "A");
    let ind_path = dataset_file(dir, name, "graph_indicator");
    let lab_path = dataset_file(dir, name, "graph_labels");
    let a_text = read_required(&a_path)?;
    let ind_text = read_required(&ind_path)?;
    let lab_text = read_required(&lab_path)?;
    let a_name = a_path.file_name().unwrap().to_string_lossy().into_owned();
    let ind_name = ind_path.file_name().unwrap().to_string_lossy().into_owned();
    let lab_name = lab_path.file_name().unwrap().to_string_lossy().into_owned();

    let indicator: Vec<usize> = parse_column(&ind_name, &ind_text)?;
    let raw_labels: Vec<i64> = parse_column(&lab_name, &lab_text)?;
    let num_graphs = raw_labels.len();
    if num_graphs == 0 {
        return Err(Error::CorruptDataset(format!("{lab_name} lists no graphs")));
    }
    let num_nodes = indicator.len();

    // global node → (graph, local index)
    let mut graph_sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(num_nodes);
    for (node, &g) in indicator.iter().enumerate() {
        if g == 0 || g > num_graphs {
            return Err(Error::CorruptDataset(format!(
                "{ind_name}: node {} belongs to graph {g}, outside 1..={num_graphs}",
                node + 1
            )));
        }
        local.push(graph_sizes[g - 1]);
        graph_sizes[g - 1] += 1;
    }

    let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); num_graphs];
    for (n, l) in lines(&a_text) {
        let (s, d) = l
            .split_once(',')
            .ok_or_else(|| Error::CorruptDataset(format!("{a_name}:{n}: expected \"src, dst\"")))?;
        let s: usize = parse_field(&a_name, n, s)?;
        let d: usize = parse_field(&a_name, n, d)?;
        if s == 0 || d == 0 || s > num_nodes || d > num_nodes {
            return Err(Error::CorruptDataset(format!(
                "{a_name}:{n}: node index outside 1..={num_nodes}"
            )));
        }
        let (gs, gd) = (indicator[s - 1], indicator[d - 1]);
        if gs != gd {
            return Err(Error::CorruptDataset(format!(
                "{a_name}:{n}: edge ({s}, {d}) crosses from graph {gs} to graph {gd}"
            )));
        }
        edges[gs - 1].push((local[s - 1], local[d - 1]));
    }

    let (label_map, num_classes) = compact_labels(&raw_labels);

    // node features: one-hot labels, then attributes
    let node_label_path = dataset_file(dir, name, "node_labels");
    let node_labels: Option<Vec<i64>> = read_optional(&node_label_path)?
        .map(|t| parse_column("node_labels", &t))
        .transpose()?;
    let attr_path = dataset_file(dir, name, "node_attributes");
    let attributes: Option<Vec<Vec<f64>>> = read_optional(&attr_path)?
        .map(|t| {
            lines(&t)
                .map(|(n, l)| l.split(',').map(|f| parse_field("node_attributes", n, f)).collect())
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .transpose()?;
    for (what, len) in [
        ("node_labels", node_labels.as_ref().map(Vec::len)),
        ("node_attributes", attributes.as_ref().map(Vec::len)),
    ] {
        if let Some(len) = len {
            if len != num_nodes {
                return Err(Error::CorruptDataset(format!(
                    "{what} has {len} rows for {num_nodes} nodes"
                )));
            }
        }
    }
    let node_label_map = node_labels.as_deref().map(compact_labels);
    let one_hot = node_label_map.as_ref().map_or(0, |(_, k)| *k);
    let attr_dim = match &attributes {
        Some(rows) => {
            let d = rows.first().map_or(0, Vec::len);
            if let Some(bad) = rows.iter().position(|r| r.len() != d) {
                return Err(Error::CorruptDataset(format!(
                    "node_attributes row {} has {} values, expected {d}",
                    bad + 1,
                    rows[bad].len()
                )));
            }
            d
        }
        None => 0,
    };
    let (dim, continuous_columns) = if one_hot + attr_dim == 0 {
        (1, Vec::new())
    } else {
        (one_hot + attr_dim, (one_hot..one_hot + attr_dim).collect())
    };
    let mut features: Vec<Array2<f64>> = graph_sizes.iter().map(|&m| Array2::zeros((m, dim))).collect();
    for node in 0..num_nodes {
        let g = indicator[node] - 1;
        let mut row = features[g].row_mut(local[node]);
        if one_hot + attr_dim == 0 {
            row[0] = 1.0;
            continue;
        }
        if let (Some(labels), Some((map, _))) = (&node_labels, &node_label_map) {
            row[map[&labels[node]]] = 1.0;
        }
        if let Some(attrs) = &attributes {
            for (c, &v) in attrs[node].iter().enumerate() {
                row[one_hot + c] = v;
            }
        }
    }

    let graphs = edges
        .into_iter()
        .zip(features)
        .zip(&raw_labels)
        .map(|((e, x), raw)| {
            let m = x.nrows();
            build_graph(m, e, x, Some(label_map[raw]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: name.to_string(),
        graphs,
        num_classes,
        feature_mode: FeatureMode::Native,
        continuous_columns,
    })
}

/// Writes `graphs` in the TU text format: every stored directed edge, the
/// graph indicator, labels and the feature matrix as node attributes.
pub fn write_tudataset(dir: &Path, name: &str, graphs: &[Graph]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut a = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut attrs = String::new();
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        for &(i, j) in g.edges() {
            a.push_str(&format!("{}, {}\n", offset + i + 1, offset + j + 1));
        }
        for row in g.features.rows() {
            indicator.push_str(&format!("{}\n", gi + 1));
            let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            attrs.push_str(&fields.join(", "));
            attrs.push('\n');
        }
        labels.push_str(&format!("{}\n", g.label.unwrap_or(0)));
        offset += g.num_nodes();
    }
    for (suffix, body) in [
        ("A", a),
        ("graph_indicator", indicator),
        ("graph_labels", labels),
        ("node_attributes", attrs),
    ] {
        let path = dataset_file(dir, name, suffix);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Replaces features with a one-hot of each node's degree (self-loops not
/// counted). The dimension is the dataset-wide maximum degree plus one;
/// with a cap, larger degrees share the last index.
pub fn synthesize_degree_features(mut dataset: Dataset, cap: Option<usize>) -> Dataset {
    let max_degree = dataset
        .graphs
        .iter()
        .flat_map(|g| (0..g.num_nodes()).map(|v| g.adjacency.degree(v)))
        .max()
        .unwrap_or(0);
    let top = cap.map_or(max_degree, |c| c.min(max_degree));
    for g in &mut dataset.graphs {
        let mut x = Array2::zeros((g.num_nodes(), top + 1));
        for v in 0..g.num_nodes() {
            x[[v, g.adjacency.degree(v).min(top)]] = 1.0;
        }
        g.features = x;
    }
    dataset.feature_mode = FeatureMode::Degree;
    dataset.continuous_columns.clear();
    dataset
}

pub fn set_scalar_features(mut dataset: Dataset) -> Dataset {
    for g in &mut dataset.graphs {
        g.features = Array2::ones((g.num_nodes(), 1));
    }
    dataset.feature_mode = FeatureMode::Scalar;
    dataset.continuous_columns.clear();
    dataset
}

pub fn apply_feature_mode(dataset: Dataset, mode: FeatureMode, degree_cap: Option<usize>) -> Dataset {
    match mode {
        FeatureMode::Native => dataset,
        FeatureMode::Scalar => set_scalar_features(dataset),
        FeatureMode::Degree => synthesize_degree_features(dataset, degree_cap),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into ⌊0.8n⌋ / ⌊0.1n⌋ / remainder.
pub fn split_indices(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::Usage(format!("cannot split {n} graphs; need at least 10")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok(Split {
        train: order,
        validation,
        test,
    })
}

pub fn split_dataset(dataset: &Dataset, seed: u64) -> Result<Split> {
    split_indices(dataset.len(), seed)
}

/// Standardizes the continuous columns of every graph with the mean and
/// standard deviation of the training graphs' nodes. Constant columns are
/// only centred.
pub fn standardize(dataset: &Dataset, train: &[usize]) -> Dataset {
    let mut out = dataset.clone();
    if dataset.continuous_columns.is_empty() {
        return out;
    }
    for &c in &dataset.continuous_columns {
        let values: Vec<f64> = train
            .iter()
            .flat_map(|&i| dataset.graphs[i].features.column(c).to_vec())
            .collect();
        if values.is_empty() {
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for g in &mut out.graphs {
            g.features
                .column_mut(c)
                .mapv_inplace(|v| (v - mean) / scale);
        }
    }
    out
}

/// Location of the cache file for a dataset in a given feature mode.
pub fn cache_path(dir: &Path, name: &str, mode: FeatureMode) -> PathBuf {
    dir.join(format!("{name}.{mode}.gcpl"))
}

pub fn dataset_to_container(dataset: &Dataset) -> Container {
    let graphs: Vec<serde_json::Value> = dataset
        .graphs
        .iter()
        .map(|g| serde_json::json!({"num_nodes": g.num_nodes(), "label": g.label}))
        .collect();
    let mut c = Container::new(serde_json::json!({
        "kind": "dataset",
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "feature_mode": dataset.feature_mode,
        "continuous_columns": dataset.continuous_columns,
        "graphs": graphs,
    }));
    for (i, g) in dataset.graphs.iter().enumerate() {
        let e = g.edges();
        let mut edges = Array2::zeros((e.len(), 2));
        for (r, &(s, d)) in e.iter().enumerate() {
            edges[[r, 0]] = s as f64;
            edges[[r, 1]] = d as f64;
        }
        c.push(format!("{i}.edges"), edges);
        c.push(format!("{i}.features"), g.features.clone());
    }
    c
}

pub fn dataset_from_container(c: &Container) -> Result<Dataset> {
    #[derive(Deserialize)]
    struct GraphMeta {
        num_nodes: usize,
        label: Option<usize>,
    }
    #[derive(Deserialize)]
    struct Header {
        kind: String,
        name: String,
        num_classes: usize,
        feature_mode: FeatureMode,
        continuous_columns: Vec<usize>,
        graphs: Vec<GraphMeta>,
    }
    let h: Header = serde_json::from_value(c.header.clone())?;
    if h.kind != "dataset" {
        return Err(Error::Container("not a dataset cache".into()));
    }
    let missing = |n: &str| Error::Container(format!("missing tensor {n}"));
    let graphs = h
        .graphs
        .iter()
        .enumerate()
        .map(|(i, meta)| {
            let en = format!("{i}.edges");
            let fname = format!("{i}.features");
            let e = c.tensor(&en).ok_or_else(|| missing(&en))?;
            let x = c.tensor(&fname).ok_or_else(|| missing(&fname))?;
            let edges = e
                .axis_iter(Axis(0))
                .map(|r| (r[0] as usize, r[1] as usize))
                .collect();
            let adjacency = Adjacency::new(meta.num_nodes, edges, Symmetry::Directed)?;
            Graph::new(adjacency, x.clone(), meta.label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: h.name,
        graphs,
        num_classes: h.num_classes,
        feature_mode: h.feature_mode,
        continuous_columns: h.continuous_columns,
    })
}

pub fn save_cache(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = cache_path(dir, &dataset.name, dataset.feature_mode);
    dataset_to_container(dataset).save(&path)?;
    Ok(path)
}

pub fn load_cache(path: &Path) -> Result<Dataset> {
    dataset_from_container(&Container::load(path)?)
}

/// Parses a dataset and converts its features, preferring a cache under
/// `cache_dir` when one exists and writing one otherwise.
pub fn load_dataset(
    dir: &Path,
    name: &str,
    mode: FeatureMode,
    cache_dir: Option<&Path>,
) -> Result<Dataset> {
    if let Some(cd) = cache_dir {
        let path = cache_path(cd, name, mode);
        if path.is_file() {
            return load_cache(&path);
        }
    }
    let ds = apply_feature_mode(parse_tudataset(dir, name)?, mode, None);
    if let Some(cd) = cache_dir {
        save_cache(&ds, cd)?;
    }
    Ok(ds)
}
