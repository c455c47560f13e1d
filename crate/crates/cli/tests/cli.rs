use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use markflow::model::Checkpoint;
use serde_json::Value;

const SMALL: &str = r#"{
  "horizon": 5,
  "model": {"hidden_dim": 8, "field_hidden": [16], "classifier_hidden": [16]},
  "train": {"epochs": 2, "batch_size": 16},
  "data": {"train_sequences": 30, "test_sequences": 8, "length": 12}
}"#;

fn markflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markflow"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = markflow(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

fn header(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

#[test]
fn simulate_writes_header_plus_one_line_per_sequence() {
    let dir = setup();
    ok(dir.path(), &["--seed", "9", "simulate", "--count", "100", "--out", "d.jsonl"]);
    let text = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 101);
    let meta = &header(&dir.path().join("d.jsonl"))["meta"];
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["version"], 1);
    assert_eq!(meta["vocab_size"], 3);
}

#[test]
fn unstable_hawkes_is_refused() {
    let dir = setup();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"data":{"process":{"kind":"hawkes","base_rates":[0.5],"excitation":[[1.2]],"decay":1.0}}}"#,
    )
    .unwrap();
    let out = markflow(dir.path(), &["--config", "bad.json", "simulate", "--out", "d.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("d.jsonl").exists());
}

#[test]
fn unknown_config_field_is_refused() {
    let dir = setup();
    fs::write(dir.path().join("bad.json"), r#"{"trian":{"epochs":1}}"#).unwrap();
    let out = markflow(dir.path(), &["--config", "bad.json", "simulate", "--out", "d.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trian"));
}

#[test]
fn zero_epochs_writes_initial_parameters() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("zero.json"), SMALL.replace("\"epochs\": 2", "\"epochs\": 0")).unwrap();
    ok(d, &["--config", "zero.json", "--seed", "4", "simulate", "--out", "train.jsonl"]);
    ok(d, &["--config", "zero.json", "--seed", "4", "train", "--data", "train.jsonl", "--out", "ck.json"]);
    let ck = Checkpoint::load(d.join("ck.json")).unwrap();
    let init = ck.model().unwrap().init_params(4);
    for (name, _) in ck.model().unwrap().param_shapes() {
        assert_eq!(ck.params.get(&name).unwrap(), init.get(&name).unwrap(), "{name}");
    }
    let trace = fs::read_to_string(d.join("ck.json.loss.csv")).unwrap();
    assert_eq!(trace.trim(), "epoch,loss_total,loss_time,loss_mark");
}

#[test]
fn pipeline_by_hand() {
    let dir = setup();
    let d = dir.path();
    let c = ["--config", "small.json"];
    let run = |rest: &[&str]| ok(d, &[&c[..], rest].concat());
    run(&["simulate", "--out", "train.jsonl"]);
    run(&["simulate", "--split", "test", "--out", "test.jsonl"]);
    run(&["train", "--data", "train.jsonl", "--out", "ck.json", "--trace", "loss.csv"]);
    let trace = fs::read_to_string(d.join("loss.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    run(&[
        "sample",
        "--checkpoint",
        "ck.json",
        "--data",
        "test.jsonl",
        "--out",
        "pred.jsonl",
        "--truth-out",
        "truth.jsonl",
        "--steps",
        "3",
    ]);
    let pred = fs::read_to_string(d.join("pred.jsonl")).unwrap();
    assert_eq!(pred.lines().count(), 1 + 8);
    assert_eq!(header(&d.join("pred.jsonl"))["meta"]["steps"], 3);
    for line in pred.lines().skip(1) {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["marks"].as_array().unwrap().len(), 5);
    }
    run(&["evaluate", "--pred", "pred.jsonl", "--truth", "truth.jsonl", "--out", "report.json"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["num_windows"], 8);
    assert!(report["metrics"]["otd"]["mean"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["windows"].as_array().unwrap().len(), 8);

    run(&["hist", "pred.jsonl", "truth.jsonl", "--reference", "truth.jsonl", "--out", "hist"]);
    let times = fs::read_to_string(d.join("hist/pred.times.csv")).unwrap();
    assert_eq!(times.lines().next().unwrap(), "bin_lo,bin_hi,count,frequency");
    assert!(d.join("hist/truth.marks.csv").exists());

    // truth for a different number of windows
    let out = markflow(d, &[&c[..], &["evaluate", "--pred", "pred.jsonl", "--truth", "train.jsonl", "--out", "r2.json"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("r2.json").exists());
}

#[test]
fn sample_rejects_vocabulary_mismatch() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "small.json", "simulate", "--out", "train.jsonl"]);
    ok(d, &["--config", "small.json", "train", "--data", "train.jsonl", "--out", "ck.json"]);
    fs::write(
        d.join("two.json"),
        r#"{"horizon":5,"data":{"process":{"kind":"poisson","rate":1.0,"mark_probs":[0.5,0.5]},"test_sequences":4,"length":12}}"#,
    )
    .unwrap();
    ok(d, &["--config", "two.json", "simulate", "--split", "test", "--out", "two.jsonl"]);
    let out = markflow(d, &["--config", "small.json", "sample", "--checkpoint", "ck.json", "--data", "two.jsonl", "--out", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_summarises_every_seed() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "small.json", "--seed", "3", "run", "--seeds", "2", "--out", "out"]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(d.join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["num_seeds"], 2);
    let seeds: Vec<u64> = summary["per_seed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [3, 4]);
    assert!(d.join("out/seed-4/report.json").exists());
    assert!(summary["metrics"]["otd"]["sd"].as_f64().unwrap() >= 0.0);
}
