use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn groundtruth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundtruth")).args(args).output().expect("binary runs")
}

fn stderr_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stderr).lines().map(|l| serde_json::from_str(l).expect("json diagnostic")).collect()
}

fn count_named(dir: &Path, name: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| if p.is_dir() { count_named(&p, name) } else { usize::from(p.file_name().unwrap() == name) })
        .sum()
}

fn write_fixture(dir: &Path) {
    let out = groundtruth(&["fixture", "--name", "package_delivery", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn version_prints_schema_version() {
    let out = groundtruth(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("groundtruth "));
}

#[test]
fn role_mismatch_exits_one_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    let apps = tmp.path().join("apps.json");
    std::fs::write(
        &apps,
        r#"[{"application_id":"bad","code":"BI_1","mapping":{"p":"p_picked","p_r":"p_van_empty"}}]"#,
    )
    .unwrap();
    let dest = tmp.path().join("transformed");
    let model = tmp.path().join("model.json");
    let out = groundtruth(&[
        "transform",
        "--model",
        model.to_str().unwrap(),
        "--applications",
        apps.to_str().unwrap(),
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let diags = stderr_lines(&out);
    assert!(diags.iter().any(|d| d["kind"] == "role_mismatch" && d["wildcard"] == "p_r"), "{diags:?}");
    assert!(!dest.exists());
}

#[test]
fn missing_model_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("sim");
    let missing = tmp.path().join("absent.json");
    let out = groundtruth(&[
        "simulate",
        "--model",
        missing.to_str().unwrap(),
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_lines(&out)[0]["kind"], "io");
    assert!(!dest.exists());
}

#[test]
fn unknown_fixture_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = groundtruth(&["fixture", "--name", "nope", "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn fixture_dataset_writes_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    let dest = tmp.path().join("data");
    let out = groundtruth(&[
        "dataset",
        "--model",
        tmp.path().join("model.json").to_str().unwrap(),
        "--grid",
        tmp.path().join("grid.json").to_str().unwrap(),
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(count_named(&dest, "log.jsonl"), 12);
    assert!(dest.join("manifest.json").exists());
}
