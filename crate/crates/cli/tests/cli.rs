use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn favard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_favard"))
        .args(args)
        .env_remove("FAVARD_WORKERS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn sha256_of(path: &Path) -> String {
    favard_cli::output::sha256_hex([std::fs::read(path).unwrap().as_slice()])
}

#[test]
fn compute_on_the_unit_segment() {
    let input = data("unit_segment.csv");
    let out = favard(&["compute", input.to_str().unwrap(), "--mc", "200000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["command"], "compute");
    assert_eq!(v["invariants_pass"], true);
    assert_eq!(v["input_sha256"], sha256_of(&input));
    let fav = v["result"]["favard"].as_f64().unwrap();
    assert!((fav - 2.0 / std::f64::consts::PI).abs() < 1e-6);
    assert_eq!(v["result"]["mc_agrees"], true);
}

#[test]
fn outputs_go_to_the_out_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = favard(&[
        "--out",
        dir.path().to_str().unwrap(),
        "compute",
        data("unit_segment.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("compute.json")).unwrap()).unwrap();
    assert_eq!(v["command"], "compute");
    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(profile.lines().count() > 100);
}

#[test]
fn empty_input_is_a_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "# nothing here\n").unwrap();
    let out = favard(&["compute", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "0,0,1,0\n0,0,1\n").unwrap();
    let out = favard(&["compute", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_input_is_an_io_failure() {
    let out = favard(&["compute", "/nonexistent/input.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unmet_hypothesis_exits_with_three() {
    let out = favard(&["pipeline", data("unit_segment.csv").to_str().unwrap(), "--kappa", "0.9"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("select_good_directions"));
}

#[test]
fn worker_override_from_the_environment() {
    let input = data("unit_segment.csv");
    let run = |workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_favard"))
            .args(["compute", input.to_str().unwrap()])
            .env("FAVARD_WORKERS", workers)
            .output()
            .unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(json(&one)["result"], json(&four)["result"]);
    assert_eq!(run("zero").status.code(), Some(3));
}

#[test]
fn content_hashes_both_inputs() {
    let set = data("four_corners_2.json");
    let curve = data("bottom_row.csv");
    let out = favard(&[
        "content",
        set.to_str().unwrap(),
        "--delta",
        "0.01",
        "--curve",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let both = favard_cli::output::sha256_hex([std::fs::read(&set).unwrap().as_slice(), std::fs::read(&curve).unwrap().as_slice()]);
    assert_eq!(v["input_sha256"], both);
    assert!(v["result"]["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn cantor_decay_rejects_large_generations() {
    assert_eq!(favard(&["cantor-decay", "--n-max", "9"]).status.code(), Some(3));
    let out = favard(&["cantor-decay", "--n-max", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["strictly_decreasing"], true);
}

#[test]
fn lattice_and_extraction_commands_succeed() {
    let input = data("line_with_gap.csv");
    let out = favard(&["lattice-check", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["holds"], true);
    let out = favard(&["extract-graph", input.to_str().unwrap(), "--center", "0.25", "--width", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["extraction"]["check"]["is_graph"], true);
}
