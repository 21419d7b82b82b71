//! CLI behavior: exit codes, manifest writing, and input validation.

use std::path::Path;
use std::process::{Command, Output};

fn c2l(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_c2l"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_minimal_workspace(dir: &Path) {
    std::fs::write(
        dir.join("corpus.jsonl"),
        concat!(
            r#"{"id":"c1","title":"","text":"Alpha fact one. Beta fact two. Gamma fact three."}"#,
            "\n",
            r#"{"id":"c2","title":"","text":"Delta item four. Epsilon item five. Zeta item six."}"#,
            "\n",
        ),
    )
    .unwrap();
    std::fs::write(
        dir.join("train.jsonl"),
        concat!(
            r#"{"id":"q1","query":"which fact is first?","answers":["alpha"]}"#,
            "\n",
        ),
    )
    .unwrap();
    std::fs::write(
        dir.join("c2l.toml"),
        r#"
seed = 3

[encoders.selector]
kind = "deterministic-test"
identity = "cli-enc"
dimension = 8

[encoders.consistency]
kind = "deterministic-test"
identity = "cli-cons"
dimension = 8

[eval]
task = "qa"
k = 2
"#,
    )
    .unwrap();
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = c2l(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("gradcheck"));
    assert!(text.contains("build-contrastive"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = c2l(dir.path(), &["index", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("--definitely-not-a-flag"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = c2l(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal_workspace(dir.path());
    let out = c2l(dir.path(), &["train-selector", "--triples", "absent.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.jsonl"));
}

#[test]
fn explicit_missing_config_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = c2l(dir.path(), &["--config", "nope.toml", "gradcheck"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_value_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal_workspace(dir.path());
    std::fs::write(
        dir.path().join("bad.toml"),
        "[bm25]\nb = 2.0\n",
    )
    .unwrap();
    let out = c2l(dir.path(), &["--config", "bad.toml", "index"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b must be in [0,1]"));
}

#[test]
fn index_writes_manifest_and_index() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal_workspace(dir.path());
    let out = c2l(dir.path(), &["index"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/index.json").exists());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "index");
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
    assert!(manifest["versions"]["c2l"].is_string());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal_workspace(dir.path());
    let out = c2l(dir.path(), &["--seed", "99", "index"]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn select_compresses_one_query() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal_workspace(dir.path());
    std::fs::write(
        dir.path().join("docs.json"),
        r#"["Alpha fact one. Beta fact two. Gamma fact three."]"#,
    )
    .unwrap();
    let out = c2l(
        dir.path(),
        &["select", "--query", "which fact?", "--docs-json", "docs.json", "--k", "2"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8_lossy(&out.stdout);
    // Two sentences, document order preserved.
    let count = summary.matches('.').count();
    assert_eq!(count, 2, "summary: {summary}");
}

#[test]
fn evaluate_none_system_reports_zero_tokens() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal_workspace(dir.path());
    std::fs::write(
        dir.path().join("eval.jsonl"),
        concat!(
            r#"{"id":"e1","query":"q one","answers":["a"],"docs":["Doc text here."]}"#,
            "\n",
            r#"{"id":"e2","query":"q two","answers":["b"],"docs":["More doc text."]}"#,
            "\n",
        ),
    )
    .unwrap();
    let out = c2l(
        dir.path(),
        &["evaluate", "--train", "eval.jsonl", "--system", "none"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/eval_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report[0]["system"], "none");
    assert_eq!(report[0]["mean_tokens"], 0.0);
    assert_eq!(report[0]["records"], 2);
    assert!(dir.path().join("out/eval_records.jsonl").exists());
}

#[test]
fn gradcheck_exits_zero_on_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = c2l(dir.path(), &["gradcheck"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("PASS").count(), 4);
}
