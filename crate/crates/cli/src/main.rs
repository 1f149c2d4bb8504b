//! `gcpool`: ingest benchmarks, train and evaluate pooling models, run the
//! repeated-split protocol, compare result files and time the operators.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcpool::container::Container;
use gcpool::data::{self, Dataset, FeatureMode};
use gcpool::edgepool::edgepool_parts;
use gcpool::nn::{Model, PoolOperator};
use gcpool::pool::{pool_parts, EdgeScorer};
use gcpool::scaling::{bench_pool_scaling, parse_sizes, ScalingOperator, TIMED_CALLS};
use gcpool::stats::{mean, sample_std, t_test, TTestKind};
use gcpool::train::{
    self, evaluate, preset, read_records, run_experiment, train_model, ExperimentConfig,
    TrainConfig, PRESETS,
};
use gcpool::{build_graph, Error, Graph};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "gcpool", version, about = "Edge-based graph component pooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a TU dataset, synthesize features and write the binary cache.
    Ingest(IngestArgs),
    /// Train one model on one split and save the best-validation checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a split of the dataset it was trained on.
    Eval(EvalArgs),
    /// Repeated train/evaluate runs over seeded splits.
    Experiment(ExperimentArgs),
    /// Two-tailed t-test on the test accuracies of two record files.
    Stats(StatsArgs),
    /// Count the learnable parameters of a configuration.
    Params(ParamsArgs),
    /// Time pooling on sparse random graphs of growing size.
    Bench(BenchArgs),
    /// Pool a single graph and dump the result as JSON.
    Pool(PoolArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset name: a preset key (proteins, imdb-binary, ...) or a TU file prefix.
    #[arg(long)]
    dataset: String,
    /// Directory holding `<NAME>/<NAME>_A.txt` or `<NAME>_A.txt`.
    #[arg(long, env = "GCPOOL_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Node features; defaults to the preset's choice, else native.
    #[arg(long, value_enum)]
    features: Option<Features>,
    /// Largest degree kept distinct by degree features.
    #[arg(long)]
    degree_cap: Option<usize>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Features {
    Native,
    Scalar,
    Degree,
}

impl From<Features> for FeatureMode {
    fn from(f: Features) -> Self {
        match f {
            Features::Native => FeatureMode::Native,
            Features::Scalar => FeatureMode::Scalar,
            Features::Degree => FeatureMode::Degree,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum Operator {
    Component,
    Edgepool,
    None,
}

impl From<Operator> for PoolOperator {
    fn from(o: Operator) -> Self {
        match o {
            Operator::Component => PoolOperator::Component,
            Operator::Edgepool => PoolOperator::Edgepool,
            Operator::None => PoolOperator::None,
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Directory with the TU text files.
    dir: PathBuf,
    #[arg(long)]
    dataset: String,
    #[arg(long, value_enum, default_value = "native")]
    features: Features,
    #[arg(long)]
    degree_cap: Option<usize>,
    /// Where the cache file goes; defaults to the input directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    operator: Option<Operator>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path for the best-validation model.
    #[arg(long, default_value = "model.gcpl")]
    out: PathBuf,
    /// Optional per-epoch history as JSON lines.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    /// Overrides the data directory recorded in the checkpoint.
    #[arg(long, env = "GCPOOL_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One dataset; without it every desk-scale preset runs.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, env = "GCPOOL_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, value_enum)]
    features: Option<Features>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// JSON-lines record file; one file per dataset when several run.
    #[arg(long, default_value = "results.jsonl")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Include the large social-network presets.
    #[arg(long)]
    full: bool,
    /// Also write the records as CSV next to the JSON lines.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Pooled-variance test instead of Welch's.
    #[arg(long)]
    student: bool,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use a preset's configuration (and report its listed count).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 8)]
    input_dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, value_enum)]
    operator: Option<Operator>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "component")]
    operator: String,
    #[arg(long, default_value = "1e3,1e4,1e5")]
    sizes: String,
    #[arg(long, default_value_t = TIMED_CALLS)]
    calls: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoolArgs {
    /// JSON graph: {"num_nodes", "edges": [[i, j], ...], "features"?: [[..], ..]}.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    dump: PathBuf,
    #[arg(long, value_enum, default_value = "component")]
    operator: Operator,
    /// Seed for the scorer when no weights are given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scorer weights, comma separated, length 2d.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    bias: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    threshold: f64,
}

type CliResult<T = ()> = Result<T, Error>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) => 1,
        Error::Divergence { .. } => 3,
        Error::InvalidEdge { .. }
        | Error::Shape { .. }
        | Error::MissingFile(_)
        | Error::CorruptDataset(_)
        | Error::Container(_)
        | Error::Io { .. }
        | Error::Json(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Stats(a) => stats(a),
        Command::Params(a) => params(a),
        Command::Bench(a) => bench(a),
        Command::Pool(a) => pool_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn print_json(value: &impl serde::Serialize) -> CliResult {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// TU prefix and default feature mode for a dataset name.
fn resolve_name(name: &str) -> (String, FeatureMode) {
    match preset(name) {
        Some(p) => (p.tu_name.to_string(), p.features),
        None => (name.to_string(), FeatureMode::Native),
    }
}

/// `dir/NAME/NAME_A.txt` if it exists, else `dir`.
fn dataset_dir(root: &Path, tu_name: &str) -> PathBuf {
    let nested = root.join(tu_name);
    if nested.join(format!("{tu_name}_A.txt")).is_file() {
        nested
    } else {
        root.to_path_buf()
    }
}

fn load_named(data_dir: &Path, name: &str, features: Option<FeatureMode>, cap: Option<usize>) -> CliResult<Dataset> {
    let (tu, default_mode) = resolve_name(name);
    let mode = features.unwrap_or(default_mode);
    let dir = dataset_dir(data_dir, &tu);
    let cache = data::cache_path(&dir, &tu, mode);
    let ds = if cap.is_none() && cache.is_file() {
        data::load_cache(&cache)?
    } else {
        data::apply_feature_mode(data::parse_tudataset(&dir, &tu)?, mode, cap)
    };
    if ds.len() == 0 {
        return Err(Error::CorruptDataset(format!("{tu} has no graphs")));
    }
    Ok(ds)
}

/// Preset defaults, then the config file, then command-line overrides.
fn train_config(dataset: Option<&str>, args: &ModelArgs) -> CliResult<TrainConfig> {
    let base = dataset
        .and_then(preset)
        .map(|p| p.train_config())
        .unwrap_or_default();
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            TrainConfig::parse_onto(&text, base)?
        }
        None => base,
    };
    if let Some(op) = args.operator {
        cfg.operator = op.into();
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ingest(a: IngestArgs) -> CliResult {
    let (tu, _) = resolve_name(&a.dataset);
    let raw = data::parse_tudataset(&a.dir, &tu)?;
    let ds = data::apply_feature_mode(raw, a.features.into(), a.degree_cap);
    let path = data::save_cache(&ds, a.cache_dir.as_deref().unwrap_or(&a.dir))?;
    eprintln!("wrote {}", path.display());
    print_json(&ds.statistics())
}

#[derive(serde::Serialize, Deserialize)]
struct CheckpointData {
    dataset: String,
    data_dir: PathBuf,
    features: FeatureMode,
    degree_cap: Option<usize>,
    seed: u64,
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let cfg = TrainConfig {
        seed: a.seed,
        ..train_config(Some(&a.data.dataset), &a.model)?
    };
    let ds = load_named(&a.data.data_dir, &a.data.dataset, a.data.features.map(Into::into), a.data.degree_cap)?;
    let split = data::split_dataset(&ds, a.seed)?;
    let ds = data::standardize(&ds, &split.train);
    let out = train_model(&cfg, ds.num_classes, &ds.subset(&split.train), &ds.subset(&split.validation))?;
    let test_accuracy = evaluate(&out.model, &ds.subset(&split.test))?;

    let mut container = out.model.to_container();
    let meta = CheckpointData {
        dataset: a.data.dataset.clone(),
        data_dir: a.data.data_dir.clone(),
        features: ds.feature_mode,
        degree_cap: a.data.degree_cap,
        seed: a.seed,
    };
    container.header["data"] = serde_json::to_value(&meta)?;
    container.save(&a.out)?;
    if let Some(h) = &a.history {
        let mut w = BufWriter::new(File::create(h).map_err(io_err(h))?);
        for e in &out.history {
            writeln!(w, "{}", serde_json::to_string(e)?).map_err(io_err(h))?;
        }
        w.flush().map_err(io_err(h))?;
    }
    print_json(&serde_json::json!({
        "checkpoint": a.out,
        "dataset": ds.name,
        "seed": a.seed,
        "parameter_count": out.model.parameter_count(),
        "best_epoch": out.best_epoch,
        "best_validation_accuracy": out.best_validation_accuracy,
        "test_accuracy": test_accuracy,
    }))
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let container = Container::load(&a.checkpoint)?;
    let model = Model::from_container(&container)?;
    let meta: CheckpointData = serde_json::from_value(container.header["data"].clone())
        .map_err(|_| Error::Container("checkpoint carries no dataset metadata".into()))?;
    let data_dir = a.data_dir.unwrap_or(meta.data_dir);
    let ds = load_named(&data_dir, &meta.dataset, Some(meta.features), meta.degree_cap)?;
    let split = data::split_dataset(&ds, meta.seed)?;
    let ds = data::standardize(&ds, &split.train);
    let (name, idx) = match a.split {
        SplitName::Train => ("train", &split.train),
        SplitName::Validation => ("validation", &split.validation),
        SplitName::Test => ("test", &split.test),
    };
    let accuracy = evaluate(&model, &ds.subset(idx))?;
    print_json(&serde_json::json!({
        "checkpoint": a.checkpoint,
        "split": name,
        "graphs": idx.len(),
        "accuracy": accuracy,
    }))
}

fn with_suffix(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned());
    let name = match ext {
        Some(e) => format!("{stem}.{tag}.{e}"),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn summary_path(records: &Path) -> PathBuf {
    let stem = records.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    records.with_file_name(format!("{stem}.summary.json"))
}

fn experiment(a: ExperimentArgs) -> CliResult {
    let names: Vec<String> = match &a.dataset {
        Some(d) => vec![d.clone()],
        None => PRESETS
            .iter()
            .filter(|p| a.full || p.desk_scale)
            .map(|p| p.key.to_string())
            .collect(),
    };
    for name in &names {
        let out = if names.len() == 1 { a.out.clone() } else { with_suffix(&a.out, name) };
        let cfg = train_config(Some(name), &a.model)?;
        let ds = load_named(&a.data_dir, name, a.features.map(Into::into), None)?;
        let exp = ExperimentConfig {
            train: cfg.clone(),
            repetitions: a.repetitions,
            seed_base: a.seed_base,
            jobs: a.jobs,
        };
        let mut w = BufWriter::new(File::create(&out).map_err(io_err(&out))?);
        let result = run_experiment(&exp, &ds, |r| {
            writeln!(w, "{}", serde_json::to_string(r)?).map_err(io_err(&out))?;
            // flushed per record so finished repetitions survive an interrupt
            w.flush().map_err(io_err(&out))
        });
        let (records, summary) = result?;
        write_json(&summary_path(&out), &summary)?;
        if a.csv {
            let csv = out.with_extension("csv");
            std::fs::write(&csv, train::records_to_csv(&records)).map_err(io_err(&csv))?;
        }
        eprintln!("{summary}");
    }
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult {
    let ra = read_records(&a.a)?;
    let rb = read_records(&a.b)?;
    let xa: Vec<f64> = ra.iter().map(|r| r.test_accuracy).collect();
    let xb: Vec<f64> = rb.iter().map(|r| r.test_accuracy).collect();
    let kind = if a.student { TTestKind::Student } else { TTestKind::Welch };
    let r = t_test(&xa, &xb, kind)?;
    print_json(&serde_json::json!({
        "a": {"file": a.a, "n": xa.len(), "mean": mean(&xa), "std": sample_std(&xa)},
        "b": {"file": a.b, "n": xb.len(), "mean": mean(&xb), "std": sample_std(&xb)},
        "test": r.kind,
        "t": r.t,
        "p": r.p,
        "df": r.df,
        "alpha": gcpool::stats::SIGNIFICANCE_LEVEL,
        "significant": r.significant,
    }))
}

fn params(a: ParamsArgs) -> CliResult {
    let model_args = ModelArgs {
        config: a.config.clone(),
        operator: a.operator,
        epochs: None,
    };
    let cfg = train_config(a.preset.as_deref(), &model_args)?;
    let mc = cfg.model_config(a.input_dim, a.classes);
    let model = Model::new(mc.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut layers: Vec<(String, usize)> = Vec::new();
    for p in model.parameters() {
        let layer = p.name.rsplit_once('.').map_or(p.name.as_str(), |(l, _)| l).to_string();
        match layers.last_mut() {
            Some((l, n)) if *l == layer => *n += p.len(),
            _ => layers.push((layer, p.len())),
        }
    }
    let reported = a.preset.as_deref().and_then(preset).map(|p| p.reported_parameters);
    print_json(&serde_json::json!({
        "architecture": mc.architecture,
        "hidden_size": mc.hidden_size,
        "input_dim": mc.input_dim,
        "num_classes": mc.num_classes,
        "operator": mc.operator,
        "parameter_count": model.parameter_count(),
        "layers": layers.into_iter().map(|(l, n)| serde_json::json!({"layer": l, "parameters": n})).collect::<Vec<_>>(),
        "listed_parameter_count": reported,
    }))
}

fn bench(a: BenchArgs) -> CliResult {
    let op: ScalingOperator = a.operator.parse()?;
    let sizes = parse_sizes(&a.sizes)?;
    let report = bench_pool_scaling(op, &sizes, a.calls, a.seed)?;
    for r in &report.rows {
        eprintln!("|V| = {:>9}  |E| = {:>9}  median {:.6} s", r.nodes, r.edges, r.median_seconds);
    }
    match report.slope {
        Some(s) => eprintln!("log-log slope {s:.3}"),
        None => eprintln!("log-log slope: needs two sizes"),
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    print_json(&report)
}

#[derive(Deserialize)]
struct GraphFile {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Option<Vec<Vec<f64>>>,
    label: Option<usize>,
}

fn read_graph(path: &Path) -> CliResult<Graph> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let gf: GraphFile = serde_json::from_str(&text)?;
    let features = match gf.features {
        Some(rows) => {
            let d = rows.first().map_or(1, Vec::len);
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::CorruptDataset("feature rows differ in length".into()));
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let n = flat.len() / d.max(1);
            feature_array(n, d, flat)?
        }
        None => feature_array(gf.num_nodes, 1, vec![1.0; gf.num_nodes])?,
    };
    build_graph(gf.num_nodes, gf.edges, features, gf.label)
}

fn feature_array(rows: usize, cols: usize, data: Vec<f64>) -> CliResult<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::CorruptDataset(e.to_string()))
}

fn pool_cmd(a: PoolArgs) -> CliResult {
    let g = read_graph(&a.graph)?;
    let d = g.feature_dim();
    let mut scorer = match a.weights {
        Some(w) => EdgeScorer::new(w, a.bias, gcpool::Activation::Tanh, a.threshold),
        None => {
            let mut s = EdgeScorer::init(d, &mut ChaCha8Rng::seed_from_u64(a.seed));
            s.bias = a.bias;
            s
        }
    };
    scorer.threshold = a.threshold;
    let result = match a.operator {
        Operator::Component => pool_parts(&g.adjacency, g.features.view(), &scorer)?,
        Operator::Edgepool => edgepool_parts(&g.adjacency, g.features.view(), &scorer)?.0,
        Operator::None => return Err(Error::Usage("pool needs an operator other than none".into())),
    };
    let dump = result.dump();
    write_json(&a.dump, &dump)?;
    eprintln!(
        "{} nodes -> {} clusters, {} merge edges",
        dump.num_nodes,
        dump.num_clusters,
        dump.merge_edges.len()
    );
    Ok(())
}
