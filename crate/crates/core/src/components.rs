//! Built-in component classes for experiment files.
//!
//! Construction is two-phase. The registry turns declarations into plain
//! specs; [`crate::pipeline::TaskModel`] later fits vocabularies, labels and
//! features on the training split and allocates parameters.

use std::path::{Path, PathBuf};

pub use crate::corpus::DataFormat;
use crate::corpus::ColumnSep;
use crate::crf::Aggregation;
use crate::features::Template;
use crate::graphconfig::{BuildArgs, ParamSpec, Params, Registry, RoleSpec};
use crate::graphconfig::GraphError;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: Option<PathBuf>,
    pub format: DataFormat,
    pub column_sep: ColumnSep,
    pub has_header: bool,
    pub min_freq: u64,
    pub lowercase: bool,
    /// One label per line; fixes label order when present.
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: Option<usize>,
    pub seed: u64,
    pub monitor_metric: String,
    pub word_dropout: f64,
    pub checkpoint_dir: PathBuf,
}

impl TrainConfig {
    pub const DEFAULT_METRIC: &'static str = "macro_f1";
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedderSpec {
    /// Randomly initialized vectors over the fitted vocabulary.
    Vanilla { id: String, dim: Option<usize>, freeze: bool },
    /// Static vectors read from a word-vector text file.
    Word {
        id: String,
        path: PathBuf,
        dim: Option<usize>,
        freeze: bool,
    },
    Concat { id: String, parts: Vec<EmbedderSpec> },
    /// Sparse character n-gram indicators; only valid as CRF features.
    CharNGram { id: String, min_n: usize, max_n: usize },
}

impl EmbedderSpec {
    pub fn id(&self) -> &str {
        match self {
            EmbedderSpec::Vanilla { id, .. }
            | EmbedderSpec::Word { id, .. }
            | EmbedderSpec::Concat { id, .. }
            | EmbedderSpec::CharNGram { id, .. } => id,
        }
    }

    /// Dense leaves in concatenation order.
    pub fn leaves(&self) -> Vec<&EmbedderSpec> {
        match self {
            EmbedderSpec::Concat { parts, .. } => parts.iter().flat_map(EmbedderSpec::leaves).collect(),
            leaf => vec![leaf],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub id: String,
    pub emb_dim: usize,
    pub dropout: f64,
    pub aggregation: Aggregation,
    pub embedders: Vec<EmbedderSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Classifier {
        id: String,
        encoder: EncoderSpec,
        encoding_dim: usize,
        num_classes: usize,
        use_bias: bool,
    },
    Tagger {
        id: String,
        templates: Vec<Template>,
        char_ngrams: Option<(usize, usize)>,
        l2: f64,
        dropout: f64,
        embedder: Option<EmbedderSpec>,
    },
}

impl ModelSpec {
    pub fn word_dropout(&self) -> f64 {
        match self {
            ModelSpec::Classifier { encoder, .. } => encoder.dropout,
            ModelSpec::Tagger { dropout, .. } => *dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Dataset(DatasetSpec),
    Engine(TrainConfig),
    Embedder(EmbedderSpec),
    Encoder(EncoderSpec),
    Model(ModelSpec),
}

impl Component {
    fn kind(&self) -> &'static str {
        match self {
            Component::Dataset(_) => "dataset",
            Component::Engine(_) => "engine",
            Component::Embedder(_) => "embedder",
            Component::Encoder(_) => "encoder",
            Component::Model(_) => "model",
        }
    }
}

const UNSUPPORTED: &str = "neural encoders are not part of this toolkit; use FeatureCrfTagger or SimpleClassifier";

fn embedders(args: &mut BuildArgs<'_, Component>, role: &str) -> Result<Vec<EmbedderSpec>, GraphError> {
    args.take(role)
        .into_iter()
        .map(|c| match c {
            Component::Embedder(e) => Ok(e),
            other => Err(args.params.invalid(format!("`{role}` must be an embedder, got a {}", other.kind()))),
        })
        .collect()
}

fn positive(params: &Params<'_>, key: &str) -> Result<Option<usize>, GraphError> {
    match params.int(key) {
        Some(v) if v >= 1 => Ok(Some(v as usize)),
        Some(v) => Err(params.invalid(format!("`{key}` must be positive, got {v}"))),
        None => Ok(None),
    }
}

fn rate(params: &Params<'_>, key: &str, default: f64) -> Result<f64, GraphError> {
    let v = params.float(key).unwrap_or(default);
    if !(0.0..1.0).contains(&v) {
        return Err(params.invalid(format!("`{key}` must lie in [0, 1), got {v}")));
    }
    Ok(v)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Registry of every built-in class. Relative paths in the experiment file
/// resolve against `base_dir`.
pub fn builtin_registry(base_dir: &Path) -> Registry<Component> {
    use crate::graphconfig::ParamKind::{Boolean, Float, Integer, String as Str, StringList};
    let mut reg = Registry::new();

    let base = base_dir.to_path_buf();
    reg.register(
        "TextDataset",
        vec![
            ParamSpec::required("train", Str),
            ParamSpec::required("dev", Str),
            ParamSpec::optional("test", Str),
            ParamSpec::optional("format", Str),
            ParamSpec::optional("column_sep", Str),
            ParamSpec::optional("has_header", Boolean),
            ParamSpec::optional("min_freq", Integer),
            ParamSpec::optional("lowercase", Boolean),
            ParamSpec::optional("labels", Str),
        ],
        vec![],
        move |args| {
            let p = &args.params;
            let train = resolve(&base, p.str("train").unwrap());
            let format = match p.str("format") {
                Some("conll") => DataFormat::Conll,
                Some("csv") => DataFormat::Csv,
                Some(other) => return Err(p.invalid(format!("unknown format `{other}` (expected conll or csv)"))),
                None if train.extension().is_some_and(|e| e == "csv") => DataFormat::Csv,
                None => DataFormat::Conll,
            };
            let column_sep = match p.str("column_sep") {
                Some(s) => s.parse().map_err(|e: std::string::String| p.invalid(e))?,
                None => ColumnSep::Auto,
            };
            Ok(Component::Dataset(DatasetSpec {
                dev: resolve(&base, p.str("dev").unwrap()),
                test: p.str("test").map(|t| resolve(&base, t)),
                train,
                format,
                column_sep,
                has_header: p.bool("has_header").unwrap_or(false),
                min_freq: positive(p, "min_freq")?.unwrap_or(1) as u64,
                lowercase: p.bool("lowercase").unwrap_or(false),
                labels: p.str("labels").map(|l| resolve(&base, l)),
            }))
        },
    );

    let base = base_dir.to_path_buf();
    reg.register(
        "Engine",
        vec![
            ParamSpec::optional("optimizer", Str),
            ParamSpec::optional("lr", Float),
            ParamSpec::optional("momentum", Float),
            ParamSpec::required("epochs", Integer),
            ParamSpec::optional("batch_size", Integer),
            ParamSpec::optional("clip_norm", Float),
            ParamSpec::optional("plateau_factor", Float),
            ParamSpec::optional("plateau_patience", Integer),
            ParamSpec::optional("patience", Integer),
            ParamSpec::optional("seed", Integer),
            ParamSpec::optional("metric", Str),
            ParamSpec::required("checkpoint_dir", Str),
        ],
        vec![],
        move |args| {
            let p = &args.params;
            let optimizer = match p.str("optimizer").unwrap_or("sgd") {
                "sgd" => OptimizerKind::Sgd,
                "adagrad" => OptimizerKind::Adagrad,
                other => return Err(p.invalid(format!("unknown optimizer `{other}` (expected sgd or adagrad)"))),
            };
            let lr = p.float("lr").unwrap_or(0.1);
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(p.invalid(format!("`lr` must be positive, got {lr}")));
            }
            let clip_norm = p.float("clip_norm");
            if clip_norm.is_some_and(|c| !(c > 0.0)) {
                return Err(p.invalid("`clip_norm` must be positive"));
            }
            let plateau_factor = p.float("plateau_factor").unwrap_or(0.5);
            if !(plateau_factor > 0.0 && plateau_factor < 1.0) {
                return Err(p.invalid(format!("`plateau_factor` must lie in (0, 1), got {plateau_factor}")));
            }
            let seed = match p.int("seed") {
                Some(s) if s >= 0 => s as u64,
                Some(s) => return Err(p.invalid(format!("`seed` must be non-negative, got {s}"))),
                None => 0,
            };
            let metric = p.str("metric").unwrap_or(TrainConfig::DEFAULT_METRIC).to_string();
            if !crate::engine::is_known_metric(&metric) {
                return Err(p.invalid(format!("unknown metric `{metric}`")));
            }
            Ok(Component::Engine(TrainConfig {
                optimizer,
                lr,
                momentum: rate(p, "momentum", 0.0)?,
                epochs: positive(p, "epochs")?.unwrap(),
                batch_size: positive(p, "batch_size")?.unwrap_or(32),
                clip_norm,
                plateau_factor,
                plateau_patience: positive(p, "plateau_patience")?.unwrap_or(2),
                early_stop_patience: positive(p, "patience")?,
                seed,
                monitor_metric: metric,
                word_dropout: 0.0,
                checkpoint_dir: resolve(&base, p.str("checkpoint_dir").unwrap()),
            }))
        },
    );

    reg.register(
        "VanillaEmbedder",
        vec![
            ParamSpec::required("embed", Str),
            ParamSpec::optional("emb_dim", Integer),
            ParamSpec::optional("freeze", Boolean),
        ],
        vec![],
        |args| {
            let p = &args.params;
            if p.str("embed") != Some("word_vocab") {
                return Err(p.invalid("`embed` must be \"word_vocab\""));
            }
            Ok(Component::Embedder(EmbedderSpec::Vanilla {
                id: p.id().to_string(),
                dim: positive(p, "emb_dim")?,
                freeze: p.bool("freeze").unwrap_or(false),
            }))
        },
    );

    let base = base_dir.to_path_buf();
    reg.register(
        "WordEmbedder",
        vec![
            ParamSpec::required("path", Str),
            ParamSpec::optional("emb_dim", Integer),
            ParamSpec::optional("freeze", Boolean),
        ],
        vec![],
        move |args| {
            let p = &args.params;
            Ok(Component::Embedder(EmbedderSpec::Word {
                id: p.id().to_string(),
                path: resolve(&base, p.str("path").unwrap()),
                dim: positive(p, "emb_dim")?,
                freeze: p.bool("freeze").unwrap_or(true),
            }))
        },
    );

    reg.register(
        "CharNGramFeaturizer",
        vec![ParamSpec::optional("min_n", Integer), ParamSpec::optional("max_n", Integer)],
        vec![],
        |args| {
            let p = &args.params;
            let min_n = positive(p, "min_n")?.unwrap_or(2);
            let max_n = positive(p, "max_n")?.unwrap_or(4);
            if min_n > max_n {
                return Err(p.invalid(format!("min_n {min_n} exceeds max_n {max_n}")));
            }
            Ok(Component::Embedder(EmbedderSpec::CharNGram {
                id: p.id().to_string(),
                min_n,
                max_n,
            }))
        },
    );

    reg.register(
        "ConcatEmbedders",
        vec![],
        vec![RoleSpec::new("embedder", 1, usize::MAX)],
        |mut args| {
            let parts = embedders(&mut args, "embedder")?;
            if parts.iter().any(|e| matches!(e, EmbedderSpec::CharNGram { .. })) {
                return Err(args.params.invalid("CharNGramFeaturizer cannot be concatenated; attach it to FeatureCrfTagger"));
            }
            Ok(Component::Embedder(EmbedderSpec::Concat {
                id: args.params.id().to_string(),
                parts,
            }))
        },
    );

    reg.register(
        "BOW_Encoder",
        vec![
            ParamSpec::required("emb_dim", Integer),
            ParamSpec::optional("dropout_value", Float),
            ParamSpec::optional("aggregation_type", Str),
        ],
        vec![RoleSpec::new("embedder", 1, usize::MAX)],
        |mut args| {
            let emb_dim = positive(&args.params, "emb_dim")?.unwrap();
            let aggregation = args
                .params
                .str("aggregation_type")
                .unwrap_or("sum")
                .parse::<Aggregation>()
                .map_err(|e| args.params.invalid(e))?;
            let dropout = rate(&args.params, "dropout_value", 0.0)?;
            let parts = embedders(&mut args, "embedder")?;
            if parts.iter().any(|e| matches!(e, EmbedderSpec::CharNGram { .. })) {
                return Err(args.params.invalid("CharNGramFeaturizer produces sparse features; attach it to FeatureCrfTagger"));
            }
            Ok(Component::Encoder(EncoderSpec {
                id: args.params.id().to_string(),
                emb_dim,
                dropout,
                aggregation,
                embedders: parts,
            }))
        },
    );

    reg.register(
        "SimpleClassifier",
        vec![
            ParamSpec::required("encoding_dimension", Integer),
            ParamSpec::required("num_classes", Integer),
            ParamSpec::optional("classification_layer_bias", Boolean),
        ],
        vec![RoleSpec::new("encoder", 1, 1)],
        |mut args| {
            let encoding_dim = positive(&args.params, "encoding_dimension")?.unwrap();
            let num_classes = positive(&args.params, "num_classes")?.unwrap();
            if num_classes < 2 {
                return Err(args.params.invalid("`num_classes` must be at least 2"));
            }
            let encoder = match args.take("encoder").pop() {
                Some(Component::Encoder(e)) => e,
                _ => return Err(args.params.invalid("`encoder` must be an encoder such as BOW_Encoder")),
            };
            if encoder.emb_dim != encoding_dim {
                return Err(args.params.invalid(format!(
                    "`encoding_dimension` ({encoding_dim}) must equal the encoder's `emb_dim` ({})",
                    encoder.emb_dim
                )));
            }
            Ok(Component::Model(ModelSpec::Classifier {
                id: args.params.id().to_string(),
                encoder,
                encoding_dim,
                num_classes,
                use_bias: args.params.bool("classification_layer_bias").unwrap_or(true),
            }))
        },
    );

    reg.register(
        "FeatureCrfTagger",
        vec![
            ParamSpec::optional("templates", StringList),
            ParamSpec::optional("l2", Float),
            ParamSpec::optional("dropout_value", Float),
        ],
        vec![RoleSpec::new("embedder", 0, 1), RoleSpec::new("char_ngrams", 0, 1)],
        |mut args| {
            let templates = match args.params.strings("templates") {
                Some(names) => names
                    .iter()
                    .map(|n| n.parse::<Template>().map_err(|_| args.params.invalid(format!("unknown template `{n}`"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => Template::CATALOG.to_vec(),
            };
            let l2 = args.params.float("l2").unwrap_or(0.0);
            if !(l2 >= 0.0 && l2.is_finite()) {
                return Err(args.params.invalid(format!("`l2` must be non-negative, got {l2}")));
            }
            let dropout = rate(&args.params, "dropout_value", 0.0)?;
            let char_ngrams = match embedders(&mut args, "char_ngrams")?.pop() {
                Some(EmbedderSpec::CharNGram { min_n, max_n, .. }) => Some((min_n, max_n)),
                Some(_) => return Err(args.params.invalid("`char_ngrams` must be a CharNGramFeaturizer")),
                None => None,
            };
            let embedder = embedders(&mut args, "embedder")?.pop();
            if matches!(embedder, Some(EmbedderSpec::CharNGram { .. })) {
                return Err(args.params.invalid("attach CharNGramFeaturizer under `char_ngrams`"));
            }
            if let Some(e) = &embedder {
                for leaf in e.leaves() {
                    if let EmbedderSpec::Vanilla { dim: None, id, .. } = leaf {
                        return Err(GraphError::MissingParam {
                            id: id.clone(),
                            key: "emb_dim".into(),
                        });
                    }
                }
            }
            if templates.is_empty() && char_ngrams.is_none() && embedder.is_none() {
                return Err(args.params.invalid("the tagger needs templates, char n-grams or an embedder"));
            }
            Ok(Component::Model(ModelSpec::Tagger {
                id: args.params.id().to_string(),
                templates,
                char_ngrams,
                l2,
                dropout,
                embedder,
            }))
        },
    );

    for name in ["LSTM2SeqEncoder", "RnnSeqCrfTagger", "SimpleTagger", "CharEmbedder", "ElmoEmbedder", "BertEmbedder"] {
        reg.reject(name, UNSUPPORTED);
    }
    reg
}

/// Instantiated experiment sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub engine: TrainConfig,
    /// Verbatim experiment file text.
    pub source: String,
    pub class_graph: Vec<(String, String)>,
    /// Directory that relative paths were resolved against.
    pub base_dir: PathBuf,
}

/// Parses, validates, plans and instantiates an experiment file.
pub fn load_experiment(path: impl AsRef<Path>) -> Result<Experiment, GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    experiment_from_str(&text, base)
}

pub fn experiment_from_str(text: &str, base_dir: &Path) -> Result<Experiment, GraphError> {
    use crate::graphconfig::{parse_experiment_str, instantiate, topo_order};
    let graph = parse_experiment_str(text)?;
    let plan = topo_order(&graph)?;
    let registry = builtin_registry(base_dir);
    let mut inst = instantiate(&graph, &plan, &registry)?;
    let wrong = |section: &str| GraphError::Invalid {
        id: section.to_string(),
        message: format!("`{section}` section has the wrong component class"),
    };
    let dataset = match inst.take("dataset") {
        Some(Component::Dataset(d)) => d,
        _ => return Err(wrong("dataset")),
    };
    let model = match inst.take("model") {
        Some(Component::Model(m)) => m,
        _ => return Err(wrong("model")),
    };
    let mut engine = match inst.take("engine") {
        Some(Component::Engine(e)) => e,
        _ => return Err(wrong("engine")),
    };
    engine.word_dropout = model.word_dropout();
    let class_graph = plan
        .order
        .iter()
        .map(|id| (id.clone(), graph.node(id).expect("planned node").class_name.clone()))
        .collect();
    Ok(Experiment {
        dataset,
        model,
        engine,
        source: text.to_string(),
        class_graph,
        base_dir: base_dir.to_path_buf(),
    })
}
