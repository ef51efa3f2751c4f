#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use sdpkit::components::experiment_from_str;
use sdpkit::engine::train_experiment;

pub struct Fixtures {
    _dir: tempfile::TempDir,
    pub tagger: PathBuf,
    pub classifier: PathBuf,
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn train(config: &str, out: &Path) {
    let path = fixtures_dir().join(config);
    let text = std::fs::read_to_string(&path).unwrap();
    let line = text.lines().find(|l| l.starts_with("checkpoint_dir")).unwrap();
    let text = text.replace(line, &format!("checkpoint_dir = {:?}", out.display().to_string()));
    let exp = experiment_from_str(&text, path.parent().unwrap()).unwrap();
    train_experiment(&exp).unwrap();
}

/// Fixture checkpoints, trained once per test binary.
pub fn fixtures() -> &'static Fixtures {
    static CELL: OnceLock<Fixtures> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let tagger = dir.path().join("tagger");
        let classifier = dir.path().join("classifier");
        train("tagger.toml", &tagger);
        train("classifier.toml", &classifier);
        Fixtures {
            _dir: dir,
            tagger,
            classifier,
        }
    })
}

/// Compares against a golden file; `BLESS=1` rewrites it.
pub fn check_golden(path: &Path, actual: &str) {
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(actual, want, "golden mismatch for {}", path.display());
}
