use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::CorpusError;
use crate::graphconfig::dialect::{self, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Conll,
    Csv,
}

impl DataFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Conll => "conll",
            DataFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskEntry {
    pub url: String,
    pub sha256: String,
    pub format: DataFormat,
}

/// Downloadable datasets keyed by task name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskRegistry {
    pub entries: BTreeMap<String, TaskEntry>,
}

impl TaskRegistry {
    /// Reads a registry file: one table per task with `url`, `sha256` and
    /// `format` keys.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let doc = dialect::parse(text).map_err(|e| CorpusError::Registry(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (name, value) in &doc.entries {
            let Value::Table(table) = value else {
                return Err(CorpusError::Registry(format!("`{name}` must be a table")));
            };
            let field = |key: &str| match table.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                _ => Err(CorpusError::Registry(format!("task `{name}` needs string key `{key}`"))),
            };
            let sha256 = field("sha256")?.to_ascii_lowercase();
            if sha256.len() != 64 || !sha256.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(CorpusError::Registry(format!("task `{name}`: sha256 must be 64 hex chars")));
            }
            let format = match field("format")?.as_str() {
                "conll" => DataFormat::Conll,
                "csv" => DataFormat::Csv,
                other => {
                    return Err(CorpusError::Registry(format!("task `{name}`: unknown format `{other}`")))
                }
            };
            entries.insert(
                name.clone(),
                TaskEntry {
                    url: field("url")?,
                    sha256,
                    format,
                },
            );
        }
        Ok(TaskRegistry { entries })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fetches a task's dataset into `dest_dir/<task>.<ext>`, verifying its
/// digest. An existing file with the right digest is reused.
pub fn download_task(task: &str, registry: &TaskRegistry, dest_dir: impl AsRef<Path>) -> Result<PathBuf, CorpusError> {
    let entry = registry
        .entries
        .get(task)
        .ok_or_else(|| CorpusError::UnknownTask(task.to_string()))?;
    let dest_dir = dest_dir.as_ref();
    let target = dest_dir.join(format!("{task}.{}", entry.format.extension()));

    if let Ok(existing) = fs::read(&target) {
        if sha256_hex(&existing) == entry.sha256 {
            return Ok(target);
        }
    }

    fs::create_dir_all(dest_dir).map_err(|e| CorpusError::io(dest_dir, e))?;
    let mut response = ureq::get(&entry.url)
        .call()
        .map_err(|e| CorpusError::Network(e.to_string()))?;
    let mut payload = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut payload)
        .map_err(|e| CorpusError::Network(e.to_string()))?;

    let partial = target.with_extension("part");
    fs::write(&partial, &payload).map_err(|e| CorpusError::io(&partial, e))?;
    let actual = sha256_hex(&payload);
    if actual != entry.sha256 {
        let _ = fs::remove_file(&partial);
        return Err(CorpusError::DigestMismatch {
            expected: entry.sha256.clone(),
            actual,
        });
    }
    fs::rename(&partial, &target).map_err(|e| CorpusError::io(&target, e))?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_registry() {
        let reg = TaskRegistry::parse(&format!(
            "[scienceie]\nurl = \"http://x/y\"\nsha256 = \"{}\"\nformat = \"conll\"\n",
            "A".repeat(64)
        ))
        .unwrap();
        assert_eq!(reg.entries["scienceie"].format, DataFormat::Conll);
        assert_eq!(reg.entries["scienceie"].sha256, "a".repeat(64));
    }

    #[test]
    fn bad_digest_rejected() {
        let err = TaskRegistry::parse("[t]\nurl=\"u\"\nsha256=\"abc\"\nformat=\"csv\"\n").unwrap_err();
        assert!(matches!(err, CorpusError::Registry(_)));
    }

    #[test]
    fn unknown_task() {
        let err = download_task("foo", &TaskRegistry::default(), std::env::temp_dir()).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownTask(t) if t == "foo"));
    }

    #[test]
    fn digest_of_empty() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
