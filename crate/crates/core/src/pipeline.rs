//! A fitted task model: vocabulary, labels, embeddings and a CRF or softmax
//! head, with loss/gradient, prediction and named parameter groups.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{DataFormat, DatasetSpec, EmbedderSpec, ModelSpec};
use crate::corpus::{
    fit_vocabulary, numericalize, read_conll, read_csv, CorpusError, TokenSequence, VocabSnapshot, Vocabulary, PAD_ID,
    UNK_ID,
};
use crate::crf::{CrfError, CrfInput, CrfModel, LabelSet, SoftmaxClassifier};
use crate::metrics::{classification_prf, conll_f1, token_prf, MetricError, MetricReport};
use crate::features::{load_word_vectors, FeatureError, FeatureSnapshot, FeatureTemplateSet, SparseFeatureVector};
use crate::rng::{self, Stream};

/// Range of the uniform initializer for trainable embeddings.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("label `{0}` is not in the model's label set")]
    UnknownLabel(String),
    #[error("expected {expected} data, found {found} data")]
    KindMismatch { expected: TaskKind, found: String },
    #[error("parameter group `{group}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        group: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("input has no tokens")]
    EmptyInput,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Tagger,
    Classifier,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Tagger => "tagger",
            TaskKind::Classifier => "classifier",
        })
    }
}

impl ModelSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            ModelSpec::Classifier { .. } => TaskKind::Classifier,
            ModelSpec::Tagger { .. } => TaskKind::Tagger,
        }
    }
}

/// Reads one split in the dataset's format.
pub fn read_split(spec: &DatasetSpec, path: &Path) -> Result<Vec<TokenSequence>, PipelineError> {
    Ok(match spec.format {
        DataFormat::Conll => read_conll(path, spec.column_sep)?,
        DataFormat::Csv => read_csv(path, spec.has_header)?,
    })
}

/// Reads a label file: one label per non-blank line.
pub fn read_label_file(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Checks that every sequence carries the gold annotation `kind` needs.
pub fn check_kind(kind: TaskKind, data: &[TokenSequence]) -> Result<(), PipelineError> {
    for seq in data {
        let found = match (seq.labels(), seq.doc_class()) {
            (Some(_), _) => TaskKind::Tagger,
            (_, Some(_)) => TaskKind::Classifier,
            _ => {
                return Err(PipelineError::KindMismatch {
                    expected: kind,
                    found: "unlabeled".into(),
                })
            }
        };
        if found != kind {
            return Err(PipelineError::KindMismatch {
                expected: kind,
                found: found.to_string(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingLeaf {
    pub id: String,
    pub dim: usize,
    /// `V × dim`, row-major over vocabulary ids.
    pub table: Vec<f64>,
    pub trainable: bool,
}

impl EmbeddingLeaf {
    pub fn group_name(&self) -> String {
        format!("embedder.{}", self.id)
    }

    fn row(&self, id: u32) -> &[f64] {
        let i = id as usize;
        &self.table[i * self.dim..(i + 1) * self.dim]
    }
}

/// Concatenation of dense embedding leaves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStack {
    pub leaves: Vec<EmbeddingLeaf>,
}

impl EmbeddingStack {
    pub fn dim(&self) -> usize {
        self.leaves.iter().map(|l| l.dim).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn embed(&self, ids: &[u32]) -> Vec<Vec<f64>> {
        ids.iter()
            .map(|&id| self.leaves.iter().flat_map(|l| l.row(id).iter().copied()).collect())
            .collect()
    }

    /// Adds per-token input gradients into the rows of trainable leaves.
    fn accumulate(&self, ids: &[u32], d_inputs: &[Vec<f64>], scale: f64, grads: &mut Gradients) {
        let mut offset = 0;
        for leaf in &self.leaves {
            if leaf.trainable {
                let g = grads.0.get_mut(&leaf.group_name()).expect("trainable group allocated");
                for (&id, d) in ids.iter().zip(d_inputs) {
                    let i = id as usize;
                    for (gv, dv) in g[i * leaf.dim..(i + 1) * leaf.dim].iter_mut().zip(&d[offset..offset + leaf.dim]) {
                        *gv += scale * dv;
                    }
                }
            }
            offset += leaf.dim;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Crf { features: FeatureTemplateSet, crf: CrfModel },
    Classifier(SoftmaxClassifier),
}

/// Gradient buffers keyed by trainable group name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients(pub BTreeMap<String, Vec<f64>>);

impl Gradients {
    pub fn zero(&mut self) {
        for g in self.0.values_mut() {
            g.fill(0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.0.values().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// A training or evaluation instance with cached ids and features.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub ids: Vec<u32>,
    pub sparse: Vec<SparseFeatureVector>,
    pub gold: Gold,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gold {
    Tags(Vec<usize>),
    Class(usize),
    None,
}

/// A named view of one parameter array.
#[derive(Debug)]
pub struct GroupRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a Vec<f64>,
    pub trainable: bool,
}

#[derive(Debug)]
pub struct GroupMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut Vec<f64>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Tags { labels: Vec<String>, score: f64 },
    Class { label: String, scores: Vec<(String, f64)> },
}

/// Saved parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    spec: ModelSpec,
    vocab: Vocabulary,
    labels: LabelSet,
    embeddings: EmbeddingStack,
    head: Head,
}

/// Options controlling how a model is fitted to data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitOptions {
    pub min_freq: u64,
    pub lowercase: bool,
    /// Fixed label inventory; otherwise labels are collected and sorted.
    pub labels: Option<Vec<String>>,
}

fn collect_labels(kind: TaskKind, sources: &[&[TokenSequence]]) -> Vec<String> {
    let mut set = BTreeSet::new();
    for seq in sources.iter().flat_map(|s| s.iter()) {
        match kind {
            TaskKind::Tagger => set.extend(seq.labels().unwrap_or_default().iter().cloned()),
            TaskKind::Classifier => set.extend(seq.doc_class().map(String::from)),
        }
    }
    set.into_iter().collect()
}

fn leaf_dims(spec: &ModelSpec) -> Result<Vec<(&EmbedderSpec, Option<usize>)>, PipelineError> {
    match spec {
        ModelSpec::Classifier { encoder, .. } => {
            let leaves: Vec<&EmbedderSpec> = encoder.embedders.iter().flat_map(EmbedderSpec::leaves).collect();
            let dims: Vec<Option<usize>> = leaves
                .iter()
                .map(|l| match l {
                    EmbedderSpec::Vanilla { dim, .. } | EmbedderSpec::Word { dim, .. } => *dim,
                    _ => None,
                })
                .collect();
            // A single leaf without an explicit dimension inherits the
            // encoder's emb_dim.
            if leaves.len() == 1 && dims[0].is_none() {
                if let EmbedderSpec::Vanilla { .. } = leaves[0] {
                    return Ok(vec![(leaves[0], Some(encoder.emb_dim))]);
                }
            }
            Ok(leaves.into_iter().zip(dims).collect())
        }
        ModelSpec::Tagger { embedder, .. } => Ok(embedder
            .iter()
            .flat_map(EmbedderSpec::leaves)
            .map(|l| match l {
                EmbedderSpec::Vanilla { dim, .. } | EmbedderSpec::Word { dim, .. } => (l, *dim),
                _ => (l, None),
            })
            .collect()),
    }
}

impl TaskModel {
    /// Fits vocabulary, labels and features on `train` and allocates
    /// parameters. `label_sources` contributes label names only.
    pub fn initialize(
        spec: &ModelSpec,
        train: &[TokenSequence],
        label_sources: &[&[TokenSequence]],
        options: &FitOptions,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        let kind = spec.kind();
        check_kind(kind, train)?;
        let vocab = fit_vocabulary(train, options.min_freq, options.lowercase);
        let label_names = match &options.labels {
            Some(l) => l.clone(),
            None => {
                let mut sources = vec![train];
                sources.extend_from_slice(label_sources);
                collect_labels(kind, &sources)
            }
        };
        let labels = LabelSet::new(label_names)?;

        let mut init = rng::stream(seed, Stream::Init);
        let mut leaves = Vec::new();
        for (leaf, dim) in leaf_dims(spec)? {
            leaves.push(match leaf {
                EmbedderSpec::Vanilla { id, freeze, .. } => {
                    let dim = dim.ok_or_else(|| PipelineError::Invalid(format!("{id}: `emb_dim` is required")))?;
                    let mut table: Vec<f64> = (0..vocab.len() * dim)
                        .map(|_| rng::unit_f64(&mut init) * 2.0 * INIT_SCALE - INIT_SCALE)
                        .collect();
                    table[..dim].fill(0.0);
                    EmbeddingLeaf {
                        id: id.clone(),
                        dim,
                        table,
                        trainable: !freeze,
                    }
                }
                EmbedderSpec::Word { id, path, freeze, .. } => {
                    let vectors = load_word_vectors(path, dim)?;
                    let d = vectors.dim();
                    let mut table = vec![0.0; vocab.len() * d];
                    for (i, tok) in vocab.tokens().iter().enumerate() {
                        let row = match i as u32 {
                            PAD_ID => continue,
                            UNK_ID => vectors.unk_vector(),
                            _ => vectors
                                .get(tok)
                                .or_else(|| vectors.get(&tok.to_lowercase()))
                                .unwrap_or(vectors.unk_vector()),
                        };
                        table[i * d..(i + 1) * d].copy_from_slice(row);
                    }
                    EmbeddingLeaf {
                        id: id.clone(),
                        dim: d,
                        table,
                        trainable: !freeze,
                    }
                }
                other => return Err(PipelineError::Invalid(format!("{}: not a dense embedder", other.id()))),
            });
        }
        let embeddings = EmbeddingStack { leaves };

        let head = match spec {
            ModelSpec::Classifier {
                encoder,
                num_classes,
                use_bias,
                ..
            } => {
                if *num_classes != labels.len() {
                    return Err(PipelineError::Invalid(format!(
                        "num_classes is {num_classes} but the data has {} classes",
                        labels.len()
                    )));
                }
                if embeddings.dim() != encoder.emb_dim {
                    return Err(PipelineError::Invalid(format!(
                        "embedders produce {} dimensions but emb_dim is {}",
                        embeddings.dim(),
                        encoder.emb_dim
                    )));
                }
                Head::Classifier(SoftmaxClassifier::new(
                    labels.len(),
                    encoder.emb_dim,
                    encoder.aggregation,
                    *use_bias,
                )?)
            }
            ModelSpec::Tagger {
                templates,
                char_ngrams,
                l2,
                ..
            } => {
                let mut features = FeatureTemplateSet::new(templates.clone(), char_ngrams.map(|(a, b)| a..=b))?;
                for seq in train {
                    for p in 0..seq.len() {
                        features.extract(seq, p)?;
                    }
                }
                features.freeze();
                let crf = CrfModel::new(labels.clone(), features.num_features(), embeddings.dim(), *l2);
                Head::Crf { features, crf }
            }
        };
        Ok(TaskModel {
            spec: spec.clone(),
            vocab,
            labels,
            embeddings,
            head,
        })
    }

    /// Rebuilds a model from saved vocabularies and parameter arrays.
    pub fn restore(
        spec: &ModelSpec,
        vocab: VocabSnapshot,
        features: Option<&FeatureSnapshot>,
        labels: Vec<String>,
        weights: &BTreeMap<String, WeightArray>,
    ) -> Result<Self, PipelineError> {
        let vocab = Vocabulary::from_snapshot(vocab).map_err(PipelineError::Invalid)?;
        let labels = LabelSet::new(labels)?;
        let fetch = |group: &str| {
            weights.get(group).ok_or_else(|| PipelineError::ShapeMismatch {
                group: group.to_string(),
                expected: vec![],
                found: vec![],
            })
        };
        let mut leaves = Vec::new();
        for (leaf, dim) in leaf_dims(spec)? {
            let (id, trainable) = match leaf {
                EmbedderSpec::Vanilla { id, freeze, .. } | EmbedderSpec::Word { id, freeze, .. } => (id, !freeze),
                other => return Err(PipelineError::Invalid(format!("{}: not a dense embedder", other.id()))),
            };
            let name = format!("embedder.{id}");
            let w = fetch(&name)?;
            let d = dim.unwrap_or_else(|| w.shape.get(1).copied().unwrap_or(0));
            leaves.push(EmbeddingLeaf {
                id: id.clone(),
                dim: d,
                table: vec![0.0; vocab.len() * d],
                trainable,
            });
        }
        let embeddings = EmbeddingStack { leaves };
        let head = match spec {
            ModelSpec::Classifier { encoder, use_bias, .. } => Head::Classifier(SoftmaxClassifier::new(
                labels.len(),
                encoder.emb_dim,
                encoder.aggregation,
                *use_bias,
            )?),
            ModelSpec::Tagger { l2, .. } => {
                let snap = features.ok_or_else(|| PipelineError::Invalid("tagger checkpoint has no feature index".into()))?;
                let features = FeatureTemplateSet::from_snapshot(snap)?;
                let crf = CrfModel::new(labels.clone(), features.num_features(), embeddings.dim(), *l2);
                Head::Crf { features, crf }
            }
        };
        let mut model = TaskModel {
            spec: spec.clone(),
            vocab,
            labels,
            embeddings,
            head,
        };
        let expected: BTreeSet<String> = model.groups().into_iter().map(|g| g.name).collect();
        if let Some(extra) = weights.keys().find(|k| !expected.contains(*k)) {
            return Err(PipelineError::ShapeMismatch {
                group: extra.clone(),
                expected: vec![],
                found: weights[extra].shape.clone(),
            });
        }
        for g in model.groups_mut() {
            let w = fetch(&g.name)?;
            if w.shape != g.shape || w.data.len() != g.data.len() {
                return Err(PipelineError::ShapeMismatch {
                    group: g.name,
                    expected: g.shape,
                    found: w.shape.clone(),
                });
            }
            g.data.copy_from_slice(&w.data);
        }
        Ok(model)
    }

    pub fn kind(&self) -> TaskKind {
        self.spec.kind()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn embeddings(&self) -> &EmbeddingStack {
        &self.embeddings
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn feature_snapshot(&self) -> Option<FeatureSnapshot> {
        match &self.head {
            Head::Crf { features, .. } => Some(features.snapshot()),
            Head::Classifier(_) => None,
        }
    }

    /// Every parameter array, sorted by group name.
    pub fn groups(&self) -> Vec<GroupRef<'_>> {
        let mut out = Vec::new();
        for leaf in &self.embeddings.leaves {
            out.push(GroupRef {
                name: leaf.group_name(),
                shape: vec![self.vocab.len(), leaf.dim],
                data: &leaf.table,
                trainable: leaf.trainable,
            });
        }
        match &self.head {
            Head::Crf { crf, .. } => {
                let (k, f, d) = (crf.k(), crf.num_features(), crf.dense_dim());
                for (name, data) in crf.params.groups() {
                    out.push(GroupRef {
                        name: format!("crf.{name}"),
                        shape: crf_shape(name, k, f, d),
                        data,
                        trainable: true,
                    });
                }
            }
            Head::Classifier(clf) => {
                out.push(GroupRef {
                    name: "classifier.bias".into(),
                    shape: vec![clf.num_classes()],
                    data: &clf.bias,
                    trainable: true,
                });
                out.push(GroupRef {
                    name: "classifier.weights".into(),
                    shape: vec![clf.num_classes(), clf.dim()],
                    data: &clf.weights,
                    trainable: true,
                });
            }
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<GroupMut<'_>> {
        let vocab_len = self.vocab.len();
        let mut out = Vec::new();
        for leaf in &mut self.embeddings.leaves {
            out.push(GroupMut {
                name: leaf.group_name(),
                shape: vec![vocab_len, leaf.dim],
                data: &mut leaf.table,
                trainable: leaf.trainable,
            });
        }
        match &mut self.head {
            Head::Crf { crf, .. } => {
                let (k, f, d) = (crf.k(), crf.num_features(), crf.dense_dim());
                for (name, data) in crf.params.groups_mut() {
                    out.push(GroupMut {
                        name: format!("crf.{name}"),
                        shape: crf_shape(name, k, f, d),
                        data,
                        trainable: true,
                    });
                }
            }
            Head::Classifier(clf) => {
                let (c, e) = (clf.num_classes(), clf.dim());
                out.push(GroupMut {
                    name: "classifier.bias".into(),
                    shape: vec![c],
                    data: &mut clf.bias,
                    trainable: true,
                });
                out.push(GroupMut {
                    name: "classifier.weights".into(),
                    shape: vec![c, e],
                    data: &mut clf.weights,
                    trainable: true,
                });
            }
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        out
    }

    pub fn weights(&self) -> BTreeMap<String, WeightArray> {
        self.groups()
            .into_iter()
            .map(|g| {
                (
                    g.name,
                    WeightArray {
                        shape: g.shape,
                        data: g.data.clone(),
                    },
                )
            })
            .collect()
    }

    /// Zeroed gradient buffers for every trainable group.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients(
            self.groups()
                .into_iter()
                .filter(|g| g.trainable)
                .map(|g| (g.name, vec![0.0; g.data.len()]))
                .collect(),
        )
    }

    /// Caches ids, sparse features and gold indices for one sequence.
    pub fn instance(&self, seq: &TokenSequence) -> Result<Instance, PipelineError> {
        let ids = numericalize(seq, &self.vocab);
        let sparse = match &self.head {
            Head::Crf { features, .. } => features.lookup_all(seq),
            Head::Classifier(_) => Vec::new(),
        };
        let index = |l: &str| self.labels.index_of(l).ok_or_else(|| PipelineError::UnknownLabel(l.to_string()));
        let gold = match (self.kind(), seq.labels(), seq.doc_class()) {
            (TaskKind::Tagger, Some(labels), _) => Gold::Tags(labels.iter().map(|l| index(l)).collect::<Result<_, _>>()?),
            (TaskKind::Classifier, _, Some(c)) => Gold::Class(index(c)?),
            _ => Gold::None,
        };
        Ok(Instance { ids, sparse, gold })
    }

    fn crf_input(&self, sparse: &[SparseFeatureVector], ids: &[u32]) -> CrfInput {
        CrfInput {
            sparse: sparse.to_vec(),
            dense: (!self.embeddings.is_empty()).then(|| self.embeddings.embed(ids)),
        }
    }

    /// Adds `scale ×` the data-term gradient of one instance into `grads`
    /// and returns its data loss. `ids` may differ from `inst.ids` (word
    /// dropout).
    pub fn accumulate(&self, inst: &Instance, ids: &[u32], scale: f64, grads: &mut Gradients) -> Result<f64, PipelineError> {
        match (&self.head, &inst.gold) {
            (Head::Crf { crf, .. }, Gold::Tags(gold)) => {
                let input = self.crf_input(&inst.sparse, ids);
                let want_inputs = self.embeddings.leaves.iter().any(|l| l.trainable);
                let mut d_inputs = input.dense.as_ref().filter(|_| want_inputs).map(|d| vec![vec![0.0; crf.dense_dim()]; d.len()]);
                let mut take = |name: &str| std::mem::take(grads.0.get_mut(&format!("crf.{name}")).expect("crf groups allocated"));
                let mut params = crate::crf::CrfParams {
                    sparse: take("sparse"),
                    dense: take("dense"),
                    transitions: take("transitions"),
                    start: take("start"),
                    end: take("end"),
                };
                let result = crf.accumulate_gradient(&input, gold, scale, &mut params, d_inputs.as_mut());
                for (name, g) in params.groups_mut() {
                    *grads.0.get_mut(&format!("crf.{name}")).expect("crf groups allocated") = std::mem::take(g);
                }
                let loss = result?;
                if let Some(d) = d_inputs {
                    self.embeddings.accumulate(ids, &d, 1.0, grads);
                }
                Ok(loss)
            }
            (Head::Classifier(clf), Gold::Class(gold)) => {
                let vectors = self.embeddings.embed(ids);
                let (loss, g) = clf.nll_gradient(&vectors, *gold)?;
                for (name, src) in [("classifier.weights", &g.weights), ("classifier.bias", &g.bias)] {
                    let target = grads.0.get_mut(name).expect("classifier groups allocated");
                    for (t, v) in target.iter_mut().zip(src) {
                        *t += scale * v;
                    }
                }
                self.embeddings.accumulate(ids, &g.inputs, scale, grads);
                Ok(loss)
            }
            _ => Err(PipelineError::KindMismatch {
                expected: self.kind(),
                found: "unlabeled".into(),
            }),
        }
    }

    /// Data loss of one instance without gradients.
    pub fn loss(&self, inst: &Instance) -> Result<f64, PipelineError> {
        match (&self.head, &inst.gold) {
            (Head::Crf { crf, .. }, Gold::Tags(gold)) => {
                let em = crf.emissions(&self.crf_input(&inst.sparse, &inst.ids))?;
                Ok(crf.log_partition(&em)? - crf.path_score(&em, gold)?)
            }
            (Head::Classifier(clf), Gold::Class(gold)) => {
                let p = clf.classify_scores(&self.embeddings.embed(&inst.ids))?;
                Ok(-p[*gold].ln())
            }
            _ => Err(PipelineError::KindMismatch {
                expected: self.kind(),
                found: "unlabeled".into(),
            }),
        }
    }

    /// Regularization penalty added once per batch.
    pub fn penalty(&self) -> f64 {
        match &self.head {
            Head::Crf { crf, .. } => crf.l2_penalty(),
            Head::Classifier(_) => 0.0,
        }
    }

    pub fn add_penalty_gradient(&self, grads: &mut Gradients) {
        if let Head::Crf { crf, .. } = &self.head {
            if crf.l2 == 0.0 {
                return;
            }
            for (name, p) in crf.params.groups() {
                let target = grads.0.get_mut(&format!("crf.{name}")).expect("crf groups allocated");
                for (t, v) in target.iter_mut().zip(p.iter()) {
                    *t += crf.l2 * v;
                }
            }
        }
    }

    pub fn predict(&self, seq: &TokenSequence) -> Result<Prediction, PipelineError> {
        if seq.is_empty() {
            return Err(PipelineError::EmptyInput);
        }
        let ids = numericalize(seq, &self.vocab);
        match &self.head {
            Head::Crf { features, crf } => {
                let input = self.crf_input(&features.lookup_all(seq), &ids);
                let em = crf.emissions(&input)?;
                let (path, score) = crf.decode_auto(&em)?;
                Ok(Prediction::Tags {
                    labels: path.iter().map(|&y| self.labels.label(y).to_string()).collect(),
                    score,
                })
            }
            Head::Classifier(clf) => {
                let p = clf.classify_scores(&self.embeddings.embed(&ids))?;
                // Highest probability; ties go to the lower class index.
                let best = (1..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
                Ok(Prediction::Class {
                    label: self.labels.label(best).to_string(),
                    scores: self.labels.labels().iter().cloned().zip(p).collect(),
                })
            }
        }
    }
}

/// Gold and predicted labels for a labeled dataset plus the task metric.
///
/// Classifier results hold one single-element sequence per document so both
/// kinds share the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub kind: TaskKind,
    pub tokens: Vec<Vec<String>>,
    pub gold: Vec<Vec<String>>,
    pub pred: Vec<Vec<String>>,
    pub report: MetricReport,
}

impl TaskModel {
    /// Predicts every sequence and scores it: span F1 for BIO taggers,
    /// token PRF for other taggers, class PRF for classifiers.
    pub fn evaluate(&self, data: &[TokenSequence]) -> Result<Evaluation, PipelineError> {
        check_kind(self.kind(), data)?;
        let mut tokens = Vec::with_capacity(data.len());
        let mut gold = Vec::with_capacity(data.len());
        let mut pred = Vec::with_capacity(data.len());
        for seq in data {
            tokens.push(seq.texts().map(String::from).collect());
            match self.predict(seq)? {
                Prediction::Tags { labels, .. } => {
                    gold.push(seq.labels().expect("kind checked").to_vec());
                    pred.push(labels);
                }
                Prediction::Class { label, .. } => {
                    gold.push(vec![seq.doc_class().expect("kind checked").to_string()]);
                    pred.push(vec![label]);
                }
            }
        }
        let report = match self.kind() {
            TaskKind::Tagger if self.labels.is_bio() => conll_f1(&gold, &pred)?,
            TaskKind::Tagger => token_prf(&gold, &pred)?,
            TaskKind::Classifier => {
                let g: Vec<&String> = gold.iter().flatten().collect();
                let p: Vec<&String> = pred.iter().flatten().collect();
                classification_prf(&g, &p)?
            }
        };
        Ok(Evaluation {
            kind: self.kind(),
            tokens,
            gold,
            pred,
            report,
        })
    }
}

fn crf_shape(name: &str, k: usize, f: usize, d: usize) -> Vec<usize> {
    match name {
        "sparse" => vec![f, k],
        "dense" => vec![k, d],
        "transitions" => vec![k, k],
        _ => vec![k],
    }
}
