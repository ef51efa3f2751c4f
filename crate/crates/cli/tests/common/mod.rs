#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use sdpkit_cli::{run_cli, Io};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a golden file; `BLESS=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(actual, want, "golden mismatch for {}", path.display());
}

pub struct Output {
    pub code: i32,
    pub out: String,
    pub err: String,
}

/// Runs the CLI in-process.
pub fn cli(args: &[&str], stdin: &str) -> Output {
    let mut input = stdin.as_bytes();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["sdpkit"];
    argv.extend_from_slice(args);
    let code = run_cli(
        argv,
        &mut Io {
            input: &mut input,
            out: &mut out,
            err: &mut err,
            prompt: false,
        },
    );
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

/// Copies a fixture experiment into `dir`, pointing data paths back at the
/// fixtures and the checkpoint at `dir/<stem>`.
pub fn experiment_copy(config: &str, dir: &Path) -> PathBuf {
    experiment_copy_from(&fixtures_dir().join(config), dir)
}

/// Like [`experiment_copy`] for any experiment file.
pub fn experiment_copy_from(src: &Path, dir: &Path) -> PathBuf {
    let base = src.parent().unwrap().canonicalize().unwrap();
    let text = std::fs::read_to_string(src).unwrap();
    let config = src.file_name().unwrap().to_str().unwrap();
    let stem = config.trim_end_matches(".toml");
    let mut lines = Vec::new();
    for line in text.lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        let value = line.split_once('=').map(|(_, v)| v.trim().trim_matches('"'));
        let line = match (key, value) {
            ("train" | "dev" | "test" | "labels", Some(v)) => {
                format!("{key} = {:?}", base.join(v).display().to_string())
            }
            ("checkpoint_dir", Some(_)) => format!("{key} = {:?}", dir.join(stem).display().to_string()),
            _ => line.to_string(),
        };
        lines.push(line);
    }
    let path = dir.join(config);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

pub struct Trained {
    pub dir: tempfile::TempDir,
    pub tagger_config: PathBuf,
    pub classifier_config: PathBuf,
    pub tagger: PathBuf,
    pub classifier: PathBuf,
    pub tagger_run: Output,
    pub classifier_run: Output,
}

/// Both fixture experiments trained through `sdpkit run`, once per binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let tagger_config = experiment_copy("tagger.toml", dir.path());
        let classifier_config = experiment_copy("classifier.toml", dir.path());
        let tagger_run = cli(&["run", tagger_config.to_str().unwrap()], "");
        assert_eq!(tagger_run.code, 0, "{}", tagger_run.err);
        let classifier_run = cli(&["run", classifier_config.to_str().unwrap()], "");
        assert_eq!(classifier_run.code, 0, "{}", classifier_run.err);
        Trained {
            tagger: dir.path().join("tagger"),
            classifier: dir.path().join("classifier"),
            tagger_config,
            classifier_config,
            tagger_run,
            classifier_run,
            dir,
        }
    })
}
