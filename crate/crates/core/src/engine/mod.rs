//! Training loop and experiment management.

mod checkpoint;
mod optim;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::checkpoint::{
    load_checkpoint, log_path, save_checkpoint, to_sorted_json, Checkpoint, ClassNode, Manifest, FORMAT_VERSION,
};
pub use self::optim::{
    adagrad_step, apply_word_dropout, clip_global_norm, improves, plateau_schedule, sgd_step, PlateauScheduler,
    ADAGRAD_EPS, IMPROVEMENT_TOL,
};
use crate::components::{DatasetSpec, Experiment, OptimizerKind, TrainConfig};
use crate::corpus::TokenSequence;
use crate::graphconfig::GraphError;
use crate::pipeline::{read_label_file, read_split, FitOptions, Gradients, Instance, PipelineError, TaskModel};
use crate::rng::{self, Stream, RNG_IDENTITY};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u64, found: u64 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("parameter group `{group}`: {detail}")]
    ShapeMismatch { group: String, detail: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
}

impl EngineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EngineError::Io {
            path: path.into(),
            source,
        }
    }
}

const RATE_METRICS: [&str; 7] = [
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "micro_precision",
    "micro_recall",
    "micro_f1",
    "accuracy",
];

/// Names accepted as the monitored dev metric.
pub fn is_known_metric(name: &str) -> bool {
    name == "loss" || RATE_METRICS.contains(&name)
}

pub fn higher_is_better(metric: &str) -> bool {
    metric != "loss"
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochLogRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub metrics: BTreeMap<String, f64>,
    pub lr: f64,
    pub wall_clock_ms: u64,
    pub timestamp: String,
}

/// Reads the train and dev splits plus the optional label file.
pub fn load_splits(spec: &DatasetSpec) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>, FitOptions), EngineError> {
    let train = read_split(spec, &spec.train)?;
    let dev = read_split(spec, &spec.dev)?;
    let labels = spec.labels.as_deref().map(read_label_file).transpose()?;
    Ok((
        train,
        dev,
        FitOptions {
            min_freq: spec.min_freq,
            lowercase: spec.lowercase,
            labels,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub model: TaskModel,
    pub best_metric: f64,
    pub best_epoch: usize,
    pub records: Vec<EpochLogRecord>,
    pub checkpoint_dir: PathBuf,
}

/// Reads the experiment's data and trains.
pub fn train_experiment(exp: &Experiment) -> Result<TrainOutcome, EngineError> {
    let (train, dev, options) = load_splits(&exp.dataset)?;
    train_on(exp, &train, &dev, &options)
}

pub fn checkpoint_of(exp: &Experiment, model: &TaskModel, best_metric: f64, epoch: usize) -> Checkpoint {
    Checkpoint {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            kind: model.kind(),
            class_graph: exp
                .class_graph
                .iter()
                .map(|(id, class)| ClassNode {
                    id: id.clone(),
                    class: class.clone(),
                })
                .collect(),
            metric: exp.engine.monitor_metric.clone(),
            best_metric,
            epoch,
            rng: RNG_IDENTITY.to_string(),
            config_dir: Some(
                std::path::absolute(&exp.base_dir)
                    .unwrap_or_else(|_| exp.base_dir.clone())
                    .display()
                    .to_string(),
            ),
        },
        config: exp.source.clone(),
        vocab: model.vocab().snapshot(),
        features: model.feature_snapshot(),
        labels: model.labels().labels().to_vec(),
        weights: model.weights(),
    }
}

struct Optimizer {
    kind: OptimizerKind,
    momentum: f64,
    state: BTreeMap<String, Vec<f64>>,
}

impl Optimizer {
    fn new(cfg: &TrainConfig, grads: &Gradients) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            momentum: cfg.momentum,
            state: grads.0.iter().map(|(k, v)| (k.clone(), vec![0.0; v.len()])).collect(),
        }
    }

    fn step(&mut self, model: &mut TaskModel, grads: &Gradients, lr: f64) -> Result<(), EngineError> {
        for g in model.groups_mut().into_iter().filter(|g| g.trainable) {
            let grad = &grads.0[&g.name];
            let state = self.state.get_mut(&g.name).expect("state allocated per trainable group");
            match self.kind {
                OptimizerKind::Sgd => sgd_step(&g.name, g.data, grad, lr, self.momentum, state)?,
                OptimizerKind::Adagrad => adagrad_step(&g.name, g.data, grad, lr, ADAGRAD_EPS, state)?,
            }
        }
        Ok(())
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn mean_loss(model: &TaskModel, data: &[Instance]) -> Result<f64, EngineError> {
    let mut total = 0.0;
    for inst in data {
        total += model.loss(inst)?;
    }
    Ok(total / data.len() as f64 + model.penalty())
}

fn append_log(file: &mut File, path: &Path, record: &EpochLogRecord) -> Result<(), EngineError> {
    let line = to_sorted_json(record).map_err(|e| EngineError::CorruptCheckpoint(e.to_string()))?;
    writeln!(file, "{line}").map_err(|e| EngineError::io(path, e))
}

/// Trains on in-memory splits, writing checkpoints and the log under the
/// engine's checkpoint directory.
pub fn train_on(
    exp: &Experiment,
    train: &[TokenSequence],
    dev: &[TokenSequence],
    options: &FitOptions,
) -> Result<TrainOutcome, EngineError> {
    if train.is_empty() {
        return Err(EngineError::EmptySplit("train"));
    }
    if dev.is_empty() {
        return Err(EngineError::EmptySplit("dev"));
    }
    let cfg = &exp.engine;
    let mut model = TaskModel::initialize(&exp.model, train, &[dev], options, cfg.seed)?;
    let train_inst = train.iter().map(|s| model.instance(s)).collect::<Result<Vec<_>, _>>()?;
    let dev_inst = dev.iter().map(|s| model.instance(s)).collect::<Result<Vec<_>, _>>()?;

    let dir = cfg.checkpoint_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| EngineError::io(&dir, e))?;
    let log = log_path(&dir);
    let mut log_file = File::create(&log).map_err(|e| EngineError::io(&log, e))?;

    let mut grads = model.zero_gradients();
    let mut optimizer = Optimizer::new(cfg, &grads);
    let mut shuffle_rng = rng::stream(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = rng::stream(cfg.seed, Stream::Dropout);
    let higher = higher_is_better(&cfg.monitor_metric);
    let mut scheduler = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience, higher);
    let mut lr = cfg.lr;
    let mut best: Option<(f64, usize, TaskModel)> = None;
    let mut stale = 0;
    let mut records = Vec::new();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let batches = crate::corpus::batch_order(train_inst.len(), cfg.batch_size, Some(shuffle_rng.next_u64()));
        let mut epoch_loss = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            grads.zero();
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                let inst = &train_inst[i];
                let ids = apply_word_dropout(&inst.ids, cfg.word_dropout, &mut dropout_rng);
                loss += model.accumulate(inst, &ids, scale, &mut grads)? * scale;
            }
            loss += model.penalty();
            model.add_penalty_gradient(&mut grads);
            if !loss.is_finite() || !grads.global_norm().is_finite() {
                return Err(EngineError::NonFiniteLoss { epoch, batch: b });
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(grads.0.values_mut(), max);
            }
            optimizer.step(&mut model, &grads, lr)?;
            epoch_loss += loss;
        }
        let train_record = EpochLogRecord {
            epoch,
            split: Split::Train,
            loss: epoch_loss / batches.len() as f64,
            metrics: BTreeMap::new(),
            lr,
            wall_clock_ms: started.elapsed().as_millis() as u64,
            timestamp: timestamp(),
        };
        append_log(&mut log_file, &log, &train_record)?;
        records.push(train_record);

        let dev_started = Instant::now();
        let eval = model.evaluate(dev)?;
        let dev_loss = mean_loss(&model, &dev_inst)?;
        let mut metrics: BTreeMap<String, f64> = RATE_METRICS
            .iter()
            .filter_map(|&m| eval.report.metric(m).map(|v| (m.to_string(), v)))
            .collect();
        let monitored = if cfg.monitor_metric == "loss" {
            dev_loss
        } else {
            *metrics.entry(cfg.monitor_metric.clone()).or_insert(0.0)
        };
        let dev_record = EpochLogRecord {
            epoch,
            split: Split::Dev,
            loss: dev_loss,
            metrics,
            lr,
            wall_clock_ms: dev_started.elapsed().as_millis() as u64,
            timestamp: timestamp(),
        };
        append_log(&mut log_file, &log, &dev_record)?;
        records.push(dev_record);

        lr = scheduler.step(monitored, lr);
        if improves(monitored, best.as_ref().map(|b| b.0), higher) {
            save_checkpoint(&checkpoint_of(exp, &model, monitored, epoch), &dir)?;
            best = Some((monitored, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    let (best_metric, best_epoch, model) = best.expect("the first epoch always improves on nothing");
    Ok(TrainOutcome {
        model,
        best_metric,
        best_epoch,
        records,
        checkpoint_dir: dir,
    })
}
