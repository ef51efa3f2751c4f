//! Inference over saved checkpoints: text and file prediction, dataset
//! evaluation and error queries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{experiment_from_str, Experiment};
use crate::corpus::{tokenize_whitespace, TokenSequence};
use crate::engine::{load_checkpoint, Checkpoint, EngineError};
use crate::graphconfig::GraphError;
use crate::metrics::{extract_spans, MetricReport};
use crate::pipeline::{read_split, Evaluation, PipelineError, Prediction, TaskKind, TaskModel};

/// Tokens on each side of an error instance.
pub const CONTEXT: usize = 3;

#[derive(Debug, Error)]
pub enum InferError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("input has no tokens")]
    EmptyInput,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("gold and predicted label are both `{0}`; errors need two different labels")]
    UnknownQuery(String),
    #[error("checkpoint is a {checkpoint} but its experiment describes a {config}")]
    KindMismatch { checkpoint: TaskKind, config: TaskKind },
    #[error("the experiment has no {0} split")]
    MissingSplit(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Labeled span with token and character offsets (`charEnd` exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TextSpan {
    #[serde(rename = "type")]
    pub kind: String,
    pub start: usize,
    pub end: usize,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedText {
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
    pub spans: Vec<TextSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedText {
    pub label: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextPrediction {
    Tagged(TaggedText),
    Classified(ClassifiedText),
}

impl TextPrediction {
    /// One line of the prediction file: `token|label` pairs for taggers, the
    /// class label for classifiers.
    pub fn to_line(&self) -> String {
        match self {
            TextPrediction::Tagged(t) => t
                .tokens
                .iter()
                .zip(&t.labels)
                .map(|(tok, l)| format!("{tok}|{l}"))
                .collect::<Vec<_>>()
                .join(" "),
            TextPrediction::Classified(c) => c.label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorInstance {
    pub sequence_index: usize,
    pub position: usize,
    pub token: String,
    pub gold_label: String,
    pub pred_label: String,
    pub context: Vec<String>,
}

/// Spans for a label sequence: BIO chunks, or maximal runs of one label
/// (other than `O`) for flat label sets.
pub fn label_spans(seq: &TokenSequence, labels: &[String], bio: bool) -> Vec<TextSpan> {
    let tokens = seq.tokens();
    let at = |kind: String, start: usize, end: usize| TextSpan {
        kind,
        start,
        end,
        char_start: tokens[start].start,
        char_end: tokens[end].end(),
    };
    if bio {
        return extract_spans(labels)
            .expect("BIO label set")
            .into_iter()
            .map(|s| at(s.kind, s.start, s.end))
            .collect();
    }
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            if labels[start] != "O" {
                spans.push(at(labels[start].clone(), start, i - 1));
            }
            start = i;
        }
    }
    spans
}

/// Predicts for already tokenized input.
pub fn predict_sequence(model: &TaskModel, seq: &TokenSequence) -> Result<TextPrediction, InferError> {
    if seq.is_empty() {
        return Err(InferError::EmptyInput);
    }
    Ok(match model.predict(seq)? {
        Prediction::Tags { labels, .. } => TextPrediction::Tagged(TaggedText {
            tokens: seq.texts().map(String::from).collect(),
            spans: label_spans(seq, &labels, model.labels().is_bio()),
            labels,
        }),
        Prediction::Class { label, scores } => TextPrediction::Classified(ClassifiedText {
            label,
            scores: scores.into_iter().collect(),
        }),
    })
}

/// Whitespace-tokenizes `text` and predicts.
pub fn predict_text(model: &TaskModel, text: &str) -> Result<TextPrediction, InferError> {
    predict_sequence(model, &tokenize_whitespace(text))
}

/// Evaluation results kept for introspection queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub evaluation: Evaluation,
    /// The model's label inventory.
    pub labels: Vec<String>,
}

impl EvalResult {
    pub fn report(&self) -> &MetricReport {
        &self.evaluation.report
    }

    /// Every position with this gold/predicted pair, in (sequence, position)
    /// order. Classifier errors are reported at position 0 with the whole
    /// document as the token.
    pub fn query_errors(&self, gold: &str, pred: &str) -> Result<Vec<ErrorInstance>, InferError> {
        for l in [gold, pred] {
            if !self.labels.iter().any(|k| k == l) {
                return Err(InferError::UnknownLabel(l.to_string()));
            }
        }
        if gold == pred {
            return Err(InferError::UnknownQuery(gold.to_string()));
        }
        let ev = &self.evaluation;
        let mut out = Vec::new();
        for (s, (g, p)) in ev.gold.iter().zip(&ev.pred).enumerate() {
            let tokens = &ev.tokens[s];
            for (i, (gl, pl)) in g.iter().zip(p).enumerate() {
                if gl != gold || pl != pred {
                    continue;
                }
                let (token, context) = match ev.kind {
                    TaskKind::Tagger => (
                        tokens[i].clone(),
                        tokens[i.saturating_sub(CONTEXT)..(i + CONTEXT + 1).min(tokens.len())].to_vec(),
                    ),
                    TaskKind::Classifier => (tokens.join(" "), Vec::new()),
                };
                out.push(ErrorInstance {
                    sequence_index: s,
                    position: i,
                    token,
                    gold_label: gl.clone(),
                    pred_label: pl.clone(),
                    context,
                });
            }
        }
        Ok(out)
    }
}

pub fn evaluate_on_dataset(model: &TaskModel, data: &[TokenSequence]) -> Result<EvalResult, InferError> {
    Ok(EvalResult {
        evaluation: model.evaluate(data)?,
        labels: model.labels().labels().to_vec(),
    })
}

/// Which split of the experiment's dataset to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSplit {
    Train,
    Dev,
    Test,
}

/// A checkpoint with its reconstructed model. Immutable after loading.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub dir: PathBuf,
    pub checkpoint: Checkpoint,
    pub experiment: Experiment,
    pub model: TaskModel,
}

/// Rebuilds the component graph from `config.orig` and overlays the saved
/// vocabularies and parameters.
pub fn load_model(dir: impl AsRef<Path>) -> Result<LoadedModel, InferError> {
    let dir = dir.as_ref();
    let checkpoint = load_checkpoint(dir)?;
    let base = checkpoint
        .manifest
        .config_dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.to_path_buf());
    let experiment = experiment_from_str(&checkpoint.config, &base)?;
    let config_kind = experiment.model.kind();
    if config_kind != checkpoint.manifest.kind {
        return Err(InferError::KindMismatch {
            checkpoint: checkpoint.manifest.kind,
            config: config_kind,
        });
    }
    let model = TaskModel::restore(
        &experiment.model,
        checkpoint.vocab.clone(),
        checkpoint.features.as_ref(),
        checkpoint.labels.clone(),
        &checkpoint.weights,
    )?;
    Ok(LoadedModel {
        dir: dir.to_path_buf(),
        checkpoint,
        experiment,
        model,
    })
}

impl LoadedModel {
    pub fn kind(&self) -> TaskKind {
        self.model.kind()
    }

    pub fn predict_for_text(&self, text: &str) -> Result<TextPrediction, InferError> {
        predict_text(&self.model, text)
    }

    /// One entry per line; blank lines give `None`.
    pub fn predict_for_file(&self, path: impl AsRef<Path>) -> Result<Vec<Option<TextPrediction>>, InferError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| InferError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.predict_for_lines(&text)
    }

    pub fn predict_for_lines(&self, text: &str) -> Result<Vec<Option<TextPrediction>>, InferError> {
        text.lines()
            .map(|line| {
                if line.trim().is_empty() {
                    Ok(None)
                } else {
                    self.predict_for_text(line).map(Some)
                }
            })
            .collect()
    }

    pub fn read_split(&self, split: DataSplit) -> Result<Vec<TokenSequence>, InferError> {
        let spec = &self.experiment.dataset;
        let path = match split {
            DataSplit::Train => &spec.train,
            DataSplit::Dev => &spec.dev,
            DataSplit::Test => spec.test.as_ref().ok_or(InferError::MissingSplit("test"))?,
        };
        Ok(read_split(spec, path)?)
    }

    pub fn evaluate_on_dataset(&self, data: &[TokenSequence]) -> Result<EvalResult, InferError> {
        evaluate_on_dataset(&self.model, data)
    }

    pub fn evaluate_split(&self, split: DataSplit) -> Result<EvalResult, InferError> {
        self.evaluate_on_dataset(&self.read_split(split)?)
    }
}

/// Formats file predictions: `line TAB prediction`, blank input lines stay
/// blank.
pub fn prediction_file(input: &str, predictions: &[Option<TextPrediction>]) -> String {
    let mut out = String::new();
    for (line, p) in input.lines().zip(predictions) {
        if let Some(p) = p {
            out.push_str(line);
            out.push('\t');
            out.push_str(&p.to_line());
        }
        out.push('\n');
    }
    out
}
