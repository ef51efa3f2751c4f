mod common;

use common::{check_golden, cli, experiment_copy, fixtures_dir, trained};

const CALZOLARI: &str =
    "Calzolari, N. (1982). Towards the organization of lexical definitions on a database structure. In COLING 1982.";

#[test]
fn run_prints_dev_report() {
    let t = trained();
    check_golden("run_tagger.txt", &t.tagger_run.out);
    check_golden("run_classifier.txt", &t.classifier_run.out);
    assert!(t.tagger_run.err.contains("saved best checkpoint"));
    assert!(t.tagger.join("manifest.json").is_file());
}

#[test]
fn test_reports_test_split() {
    let t = trained();
    let o = cli(&["test", t.tagger_config.to_str().unwrap()], "");
    assert_eq!(o.code, 0, "{}", o.err);
    check_golden("test_tagger.txt", &o.out);
    let o = cli(&["test", t.classifier_config.to_str().unwrap()], "");
    assert_eq!(o.code, 0, "{}", o.err);
    check_golden("test_classifier.txt", &o.out);
}

#[test]
fn test_before_run_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = experiment_copy("tagger.toml", dir.path());
    let o = cli(&["test", config.to_str().unwrap()], "");
    assert_eq!(o.code, 1);
    assert!(o.err.starts_with("error: ") && o.err.contains("run before test"), "{}", o.err);
    assert_eq!(o.err.lines().count(), 1);
}

#[test]
fn predict_text() {
    let t = trained();
    let o = cli(&["predict", t.tagger.to_str().unwrap(), "--text", CALZOLARI], "");
    assert_eq!(o.code, 0, "{}", o.err);
    check_golden("predict_tagger.txt", &o.out);
    let o = cli(
        &["predict", t.classifier.to_str().unwrap(), "--text", "we use the toolkit of prior work"],
        "",
    );
    assert_eq!(o.code, 0, "{}", o.err);
    check_golden("predict_classifier.txt", &o.out);
}

#[test]
fn predict_file_to_stdout_and_out() {
    let t = trained();
    let input = fixtures_dir().join("refs.txt");
    let o = cli(&["predict", t.tagger.to_str().unwrap(), "--file", input.to_str().unwrap()], "");
    assert_eq!(o.code, 0, "{}", o.err);
    check_golden("predict_file_tagger.txt", &o.out);
    assert_eq!(o.out.lines().count(), 3);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("preds.txt");
    let o2 = cli(
        &[
            "predict",
            t.tagger.to_str().unwrap(),
            "--file",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(o2.code, 0, "{}", o2.err);
    assert!(o2.out.is_empty());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), o.out);
}

#[test]
fn interact_transcript() {
    let t = trained();
    let script = "help\ncm\nprf\nerrors title author\nerrors nope O\npredict Smith, J. (2001). Parsing. In ACL.\nbogus\nquit\nprf\n";
    let o = cli(&["interact", t.tagger.to_str().unwrap()], script);
    assert_eq!(o.code, 0, "{}", o.err);
    check_golden("interact_tagger.txt", &o.out);

    let o = cli(&["interact", t.classifier.to_str().unwrap()], "cm\nerrors method result\n");
    assert_eq!(o.code, 0, "{}", o.err);
    check_golden("interact_classifier.txt", &o.out);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec![],
        vec!["bogus"],
        vec!["predict", "x"],
        vec!["predict", "x", "--text", "a", "--file", "b"],
        vec!["serve", "--model", "noequals"],
    ] {
        let o = cli(&args, "");
        assert_eq!(o.code, 2, "{args:?}");
        assert!(o.err.starts_with("error: "), "{args:?}: {}", o.err);
        assert_eq!(o.err.lines().count(), 1, "{args:?}: {}", o.err);
    }
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[model]\nclass = \"NoSuchModel\"\n").unwrap();
    let o = cli(&["run", path.to_str().unwrap()], "");
    assert_eq!(o.code, 2, "{}", o.err);
    let o = cli(&["run", dir.path().join("missing.toml").to_str().unwrap()], "");
    assert_eq!(o.code, 1, "{}", o.err);
}

#[test]
fn missing_checkpoint_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["predict", dir.path().to_str().unwrap(), "--text", "x"], "");
    assert_eq!(o.code, 1);
    assert!(o.err.starts_with("error: "));
}
