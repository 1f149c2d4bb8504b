//! Training loop, evaluation and the repeated-split experiment protocol.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_dataset, standardize, Dataset, FeatureMode};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Adam, Batch, HalvingSchedule, Model, ModelConfig, PoolOperator};
use crate::stats::{mean, sample_std};

pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub architecture: String,
    pub hidden_size: usize,
    pub operator: PoolOperator,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_halving_every: usize,
    pub dropout: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: "CPCL".into(),
            hidden_size: 16,
            operator: PoolOperator::Component,
            epochs: 200,
            learning_rate: 0.001,
            lr_halving_every: 100,
            dropout: 0.1,
            seed: 0,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

/// A benchmark dataset together with its published model configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    /// Key accepted on the command line.
    pub key: &'static str,
    /// Directory and file prefix of the TU distribution.
    pub tu_name: &'static str,
    pub features: FeatureMode,
    /// Part of the default desk-scale set; the rest need `--full`.
    pub desk_scale: bool,
    pub architecture: &'static str,
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_halving_every: usize,
    pub dropout: f64,
    /// Parameter count listed with the published configuration.
    pub reported_parameters: usize,
}

pub const PRESETS: [Preset; 8] = [
    Preset {
        key: "proteins",
        tu_name: "PROTEINS",
        features: FeatureMode::Native,
        desk_scale: true,
        architecture: "CPCL",
        hidden_size: 16,
        epochs: 200,
        learning_rate: 0.001,
        lr_halving_every: 100,
        dropout: 0.1,
        reported_parameters: 802,
    },
    Preset {
        key: "reddit-binary",
        tu_name: "REDDIT-BINARY",
        features: FeatureMode::Scalar,
        desk_scale: false,
        architecture: "CCPCCPCLL",
        hidden_size: 128,
        epochs: 200,
        learning_rate: 0.001,
        lr_halving_every: 50,
        dropout: 0.0,
        reported_parameters: 83_459,
    },
    Preset {
        key: "reddit-multi-12k",
        tu_name: "REDDIT-MULTI-12K",
        features: FeatureMode::Scalar,
        desk_scale: false,
        architecture: "CCPCCPCLL",
        hidden_size: 256,
        epochs: 200,
        learning_rate: 0.00025,
        lr_halving_every: 55,
        dropout: 0.025,
        reported_parameters: 333_325,
    },
    Preset {
        key: "collab",
        tu_name: "COLLAB",
        features: FeatureMode::Degree,
        desk_scale: false,
        architecture: "CPCL",
        hidden_size: 32,
        epochs: 100,
        learning_rate: 0.001,
        lr_halving_every: 65,
        dropout: 0.5,
        reported_parameters: 12_996,
    },
    Preset {
        key: "imdb-binary",
        tu_name: "IMDB-BINARY",
        features: FeatureMode::Degree,
        desk_scale: true,
        architecture: "CPCL",
        hidden_size: 32,
        epochs: 100,
        learning_rate: 0.0001,
        lr_halving_every: 22,
        dropout: 0.1,
        reported_parameters: 18_498,
    },
    Preset {
        key: "imdb-multi",
        tu_name: "IMDB-MULTI",
        features: FeatureMode::Degree,
        desk_scale: true,
        architecture: "CPCL",
        hidden_size: 128,
        epochs: 200,
        learning_rate: 0.001,
        lr_halving_every: 45,
        dropout: 0.1,
        reported_parameters: 62_468,
    },
    Preset {
        key: "nci1",
        tu_name: "NCI1",
        features: FeatureMode::Degree,
        desk_scale: true,
        architecture: "CPCL",
        hidden_size: 128,
        epochs: 200,
        learning_rate: 0.005,
        lr_halving_every: 45,
        dropout: 0.1,
        reported_parameters: 38_274,
    },
    Preset {
        key: "reddit-multi-5k",
        tu_name: "REDDIT-MULTI-5K",
        features: FeatureMode::Scalar,
        desk_scale: false,
        architecture: "CCPCCPCLL",
        hidden_size: 128,
        epochs: 300,
        learning_rate: 0.0007,
        lr_halving_every: 80,
        dropout: 0.0,
        reported_parameters: 83_975,
    },
];

/// Looks a preset up by key or TU name, case-insensitively.
pub fn preset(name: &str) -> Option<&'static Preset> {
    let n = name.to_ascii_lowercase().replace('_', "-");
    PRESETS
        .iter()
        .find(|p| p.key == n || p.tu_name.eq_ignore_ascii_case(&n))
}

impl Preset {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            architecture: self.architecture.into(),
            hidden_size: self.hidden_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            lr_halving_every: self.lr_halving_every,
            dropout: self.dropout,
            ..TrainConfig::default()
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Usage(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 || self.lr_halving_every == 0 {
            return Err(Error::Usage("batch size and LR halving period must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        let config = ModelConfig {
            architecture: self.architecture.clone(),
            hidden_size: self.hidden_size,
            dropout: self.dropout,
            num_classes,
            input_dim,
            operator: self.operator,
        };
        // `none` means the same network with its pooling layers removed
        if self.operator == PoolOperator::None {
            config.without_pooling()
        } else {
            config
        }
    }

    /// Parses flat `key = value` text. `#` starts a comment; a `preset` key
    /// supplies defaults that later keys override.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_onto(text, TrainConfig::default())
    }

    /// Like [`TrainConfig::parse`], starting from `base` when the text names
    /// no preset.
    pub fn parse_onto(text: &str, base: TrainConfig) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut order = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim().to_ascii_lowercase();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
            order.push(k);
        }
        let mut cfg = match entries.get("preset") {
            Some(p) => preset(p)
                .ok_or_else(|| Error::Config(format!("unknown preset {p:?}")))?
                .train_config(),
            None => base,
        };
        for k in order {
            cfg.set(&k, &entries[&k])?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "preset" | "dataset" | "features" => {}
            "architecture" => self.architecture = value.to_ascii_uppercase(),
            "hidden_size" => self.hidden_size = num(key, value)?,
            "operator" => self.operator = value.parse()?,
            "epochs" => self.epochs = num(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = num(key, value)?,
            "lr_halving_every" | "lr_halving" => self.lr_halving_every = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "architecture = {}\nhidden_size = {}\noperator = {}\nepochs = {}\nlearning_rate = {}\n\
             lr_halving_every = {}\ndropout = {}\nseed = {}\nbatch_size = {}\n",
            self.architecture,
            self.hidden_size,
            self.operator,
            self.epochs,
            self.learning_rate,
            self.lr_halving_every,
            self.dropout,
            self.seed,
            self.batch_size
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the best validation accuracy; the final
    /// parameters when there is no validation set.
    pub model: Model,
    pub final_model: Model,
    pub best_epoch: usize,
    pub best_validation_accuracy: Option<f64>,
    pub history: Vec<EpochStats>,
}

/// Trains a fresh model. Initialisation, batch order and dropout all come
/// from one generator seeded with `config.seed`.
pub fn train_model(
    config: &TrainConfig,
    num_classes: usize,
    train: &[&Graph],
    validation: &[&Graph],
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::Usage("training set is empty".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(config.model_config(first.feature_dim(), num_classes), &mut rng)?;
    let schedule = HalvingSchedule {
        base: config.learning_rate,
        every: config.lr_halving_every,
    };
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 0..config.epochs {
        adam.learning_rate = schedule.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| train[i]).collect();
            let batch = Batch::new(&graphs)?;
            model.zero_grad();
            let pass = model.forward(&batch, Some(&mut rng))?;
            let loss = model.backward(&pass)?;
            if !loss.is_finite() || model.parameters().any(|p| p.grad.iter().any(|g| !g.is_finite())) {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            let labels = batch.labels.as_ref().expect("training graphs are labelled");
            correct += pass
                .predicted_classes()
                .iter()
                .zip(labels)
                .filter(|(p, y)| p == y)
                .count();
            adam.step(model.parameters_mut());
        }
        let validation_accuracy = if validation.is_empty() {
            None
        } else {
            Some(evaluate(&model, validation)?)
        };
        if let Some(acc) = validation_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.clone()));
            }
        }
        history.push(EpochStats {
            epoch,
            learning_rate: adam.learning_rate,
            loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            validation_accuracy,
        });
    }

    Ok(match best {
        Some((acc, epoch, best_model)) => TrainOutcome {
            model: best_model,
            final_model: model,
            best_epoch: epoch,
            best_validation_accuracy: Some(acc),
            history,
        },
        None => TrainOutcome {
            model: model.clone(),
            final_model: model,
            best_epoch: config.epochs - 1,
            best_validation_accuracy: None,
            history,
        },
    })
}

/// Fraction of `graphs` whose predicted class equals the label.
pub fn evaluate(model: &Model, graphs: &[&Graph]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Usage("cannot evaluate on an empty split".into()));
    }
    let mut correct = 0usize;
    for chunk in graphs.chunks(256) {
        let batch = Batch::new(chunk)?;
        let labels = batch
            .labels
            .as_ref()
            .ok_or_else(|| Error::Usage("evaluation graphs must be labelled".into()))?;
        let pass = model.infer(&batch)?;
        correct += pass
            .predicted_classes()
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
    }
    Ok(correct as f64 / graphs.len() as f64)
}

/// One repetition of the protocol. Wall time is kept out of the serialized
/// record so that record files are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub repetition: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_validation_accuracy: f64,
    pub best_epoch: usize,
    pub parameter_count: usize,
    #[serde(skip_serializing, default)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub dataset: String,
    pub architecture: String,
    pub operator: PoolOperator,
    pub repetitions: usize,
    pub seed_base: u64,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_best_validation_accuracy: f64,
    pub parameter_count: usize,
    /// Percentages as `mean ± std`.
    pub formatted: String,
    pub wall_times: Vec<f64>,
    pub total_wall_time: f64,
}

impl fmt::Display for ExperimentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} ({}): {} over {} repetitions, {} parameters",
            self.dataset, self.architecture, self.operator, self.formatted, self.repetitions, self.parameter_count
        )
    }
}

/// Mean ± sample standard deviation of test accuracies; std is 0 for a
/// single record.
pub fn summarize(dataset: &str, config: &TrainConfig, seed_base: u64, records: &[ResultRecord]) -> ExperimentSummary {
    let acc: Vec<f64> = records.iter().map(|r| r.test_accuracy).collect();
    let val: Vec<f64> = records.iter().map(|r| r.best_validation_accuracy).collect();
    let m = mean(&acc);
    let s = sample_std(&acc);
    let arch = config.model_config(1, 2).architecture;
    ExperimentSummary {
        dataset: dataset.to_string(),
        architecture: arch,
        operator: config.operator,
        repetitions: records.len(),
        seed_base,
        mean_test_accuracy: m,
        std_test_accuracy: s,
        mean_best_validation_accuracy: mean(&val),
        parameter_count: records.first().map_or(0, |r| r.parameter_count),
        formatted: format!("{:.1} ± {:.1}", 100.0 * m, 100.0 * s),
        wall_times: records.iter().map(|r| r.wall_time).collect(),
        total_wall_time: records.iter().map(|r| r.wall_time).sum(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub repetitions: usize,
    pub seed_base: u64,
    /// Worker threads; repetitions are independent.
    pub jobs: usize,
}

/// Protocol for repetition `r` with seed `s = seed_base + r`: split with
/// `s`, standardize on the training part, train with `s`, score the
/// best-validation model on the test part.
pub fn run_repetition(config: &TrainConfig, dataset: &Dataset, repetition: usize, seed: u64) -> Result<ResultRecord> {
    let start = Instant::now();
    let split = split_dataset(dataset, seed)?;
    let ds = standardize(dataset, &split.train);
    let cfg = TrainConfig {
        seed,
        ..config.clone()
    };
    let outcome = train_model(
        &cfg,
        ds.num_classes,
        &ds.subset(&split.train),
        &ds.subset(&split.validation),
    )?;
    let test_accuracy = evaluate(&outcome.model, &ds.subset(&split.test))?;
    Ok(ResultRecord {
        repetition,
        seed,
        test_accuracy,
        best_validation_accuracy: outcome.best_validation_accuracy.unwrap_or(f64::NAN),
        best_epoch: outcome.best_epoch,
        parameter_count: outcome.model.parameter_count(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs every repetition on up to `jobs` threads. `sink` sees records in
/// repetition order as soon as each prefix is complete, so a caller that
/// writes them out keeps every finished repetition if a later one fails.
pub fn run_experiment(
    config: &ExperimentConfig,
    dataset: &Dataset,
    mut sink: impl FnMut(&ResultRecord) -> Result<()>,
) -> Result<(Vec<ResultRecord>, ExperimentSummary)> {
    if config.repetitions == 0 {
        return Err(Error::Usage("repetitions must be at least 1".into()));
    }
    config.train.validate()?;
    let jobs = config.jobs.clamp(1, config.repetitions);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<ResultRecord>)>();
    let mut records: Vec<ResultRecord> = Vec::with_capacity(config.repetitions);
    let mut first_error = None;

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= config.repetitions {
                    break;
                }
                let out = run_repetition(&config.train, dataset, r, config.seed_base + r as u64);
                let failed = out.is_err();
                if tx.send((r, out)).is_err() || failed {
                    // stop handing out work after a failure
                    next.store(config.repetitions, Ordering::Relaxed);
                    break;
                }
            });
        }
        drop(tx);

        // single writer: release records strictly in repetition order
        let mut pending = BTreeMap::new();
        for (r, out) in rx {
            match out {
                Ok(rec) => {
                    pending.insert(r, rec);
                }
                Err(e) => {
                    if first_error.as_ref().is_none_or(|(fr, _)| r < *fr) {
                        first_error = Some((r, e));
                    }
                }
            }
            while let Some(rec) = pending.remove(&records.len()) {
                if first_error.as_ref().is_some_and(|(fr, _)| records.len() >= *fr) {
                    break;
                }
                if let Err(e) = sink(&rec) {
                    first_error = Some((records.len(), e));
                    next.store(config.repetitions, Ordering::Relaxed);
                    break;
                }
                records.push(rec);
            }
        }
    });

    if let Some((_, e)) = first_error {
        return Err(e);
    }
    let summary = summarize(&dataset.name, &config.train, config.seed_base, &records);
    Ok((records, summary))
}

/// Reads a JSON-lines record file.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn records_to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from("repetition,seed,test_accuracy,best_validation_accuracy,best_epoch,parameter_count\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.repetition, r.seed, r.test_accuracy, r.best_validation_accuracy, r.best_epoch, r.parameter_count
        ));
    }
    out
}
