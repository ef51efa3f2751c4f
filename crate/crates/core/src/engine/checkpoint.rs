//! Checkpoint directory layout and (de)serialization.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::corpus::VocabSnapshot;
use crate::features::FeatureSnapshot;
use crate::pipeline::{TaskKind, WeightArray};

pub const FORMAT_VERSION: u64 = 1;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.orig";
pub const VOCAB: &str = "vocab.json";
pub const FEATURES: &str = "features.json";
pub const LABELS: &str = "labels.json";
pub const WEIGHTS: &str = "weights.json";
pub const LOG: &str = "log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNode {
    pub id: String,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub format_version: u64,
    pub kind: TaskKind,
    pub class_graph: Vec<ClassNode>,
    pub metric: String,
    pub best_metric: f64,
    pub epoch: usize,
    pub rng: String,
    /// Directory the experiment file's relative paths resolve against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    /// Verbatim experiment file.
    pub config: String,
    pub vocab: VocabSnapshot,
    /// Present for taggers only.
    pub features: Option<FeatureSnapshot>,
    pub labels: Vec<String>,
    pub weights: BTreeMap<String, WeightArray>,
}

/// Serializes with object keys sorted at every level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    // serde_json's default map is ordered by key.
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), EngineError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| EngineError::io(&tmp, e))?;
    fs::rename(&tmp, &target).map_err(|e| EngineError::io(&target, e))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, EngineError> {
    to_sorted_json(value)
        .map(String::into_bytes)
        .map_err(|e| EngineError::CorruptCheckpoint(e.to_string()))
}

/// Writes every file through a temporary name; the manifest goes last so a
/// directory with a manifest is complete.
pub fn save_checkpoint(ckpt: &Checkpoint, dir: impl AsRef<Path>) -> Result<(), EngineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| EngineError::io(dir, e))?;
    write_atomic(dir, CONFIG, ckpt.config.as_bytes())?;
    write_atomic(dir, VOCAB, &json(&ckpt.vocab)?)?;
    match &ckpt.features {
        Some(f) => write_atomic(dir, FEATURES, &json(f)?)?,
        None => {
            let _ = fs::remove_file(dir.join(FEATURES));
        }
    }
    write_atomic(dir, LABELS, &json(&ckpt.labels)?)?;
    write_atomic(dir, WEIGHTS, &json(&ckpt.weights)?)?;
    write_atomic(dir, MANIFEST, &json(&ckpt.manifest)?)
}

fn read(dir: &Path, name: &str) -> Result<String, EngineError> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(EngineError::CorruptCheckpoint(format!("missing {name}"))),
        Err(e) => Err(EngineError::io(path, e)),
    }
}

fn parse<T: DeserializeOwned>(name: &str, text: &str) -> Result<T, EngineError> {
    serde_json::from_str(text).map_err(|e| EngineError::CorruptCheckpoint(format!("{name}: {e}")))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint, EngineError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(EngineError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint directory not found"),
        ));
    }
    let manifest_text = read(dir, MANIFEST)?;
    let raw: serde_json::Value = parse(MANIFEST, &manifest_text)?;
    let version = raw.get("formatVersion").and_then(serde_json::Value::as_u64);
    match version {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(EngineError::VersionMismatch {
                expected: FORMAT_VERSION,
                found,
            })
        }
        None => return Err(EngineError::CorruptCheckpoint("manifest has no formatVersion".into())),
    }
    let manifest: Manifest = parse(MANIFEST, &manifest_text)?;
    let features = match manifest.kind {
        TaskKind::Tagger => Some(parse(FEATURES, &read(dir, FEATURES)?)?),
        TaskKind::Classifier => None,
    };
    let weights: BTreeMap<String, WeightArray> = parse(WEIGHTS, &read(dir, WEIGHTS)?)?;
    for (group, w) in &weights {
        let expected: usize = w.shape.iter().product();
        if expected != w.data.len() {
            return Err(EngineError::ShapeMismatch {
                group: group.clone(),
                detail: format!("shape {:?} needs {expected} values, found {}", w.shape, w.data.len()),
            });
        }
    }
    Ok(Checkpoint {
        manifest,
        config: read(dir, CONFIG)?,
        vocab: parse(VOCAB, &read(dir, VOCAB)?)?,
        features,
        labels: parse(LABELS, &read(dir, LABELS)?)?,
        weights,
    })
}

pub fn log_path(dir: impl AsRef<Path>) -> PathBuf {
    dir.as_ref().join(LOG)
}
