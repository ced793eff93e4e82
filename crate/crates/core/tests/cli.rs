//! The `fedtune` binary: exit codes, error JSON and output directories.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedtune::experiment::{verify_manifest, Manifest, MANIFEST};
use serde_json::{json, Value};

fn fedtune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedtune")).args(args).output().expect("binary runs")
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(extra);
    fedtune(&args)
}

fn error_of(out: &Output) -> Value {
    assert!(!out.status.success(), "expected failure");
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

fn tiny_image() -> Value {
    let sgd = json!({ "learning_rate": 0.05, "momentum": 0.9, "weight_decay": 0.0, "clip_norm": 10.0, "batch_size": 20 });
    json!({
        "scenario": "mnist_permuted",
        "seed": 3,
        "image": { "train_size": 300, "test_size": 100, "nodes": 6, "per_node": 40, "permutation_seed": 2 },
        "classifier": { "hidden": [16] },
        "pretrain": { "epochs": 1, "sgd": sgd },
        "finetune": {
            "client": { "method": "rehearsal", "lambda": 0.5, "epochs": 1, "sgd": sgd },
            "aggregation": { "mode": "average", "k": 2 },
            "rounds": 3,
            "lambda_grid": [0.5, 1.0]
        }
    })
}

fn comm_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/comm_lstm.json")
}

#[test]
fn comm_report_writes_hashed_outputs() {
    let out = tempfile::tempdir().unwrap();
    let res = run_in("comm-report", &comm_config(), out.path(), &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["config.json", "comm_report.json", "comm_rounds.csv", MANIFEST] {
        assert!(out.path().join(f).is_file(), "missing {f}");
    }
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(out.path().join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest.command, "comm-report");
    assert!(manifest.files.iter().all(|e| e.sha256.len() == 64));
    assert!(verify_manifest(out.path()).unwrap().is_empty());

    let report: Value = serde_json::from_slice(&std::fs::read(out.path().join("comm_report.json")).unwrap()).unwrap();
    assert_eq!(report["k"], 10);
    let csv = std::fs::read_to_string(out.path().join("comm_rounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);

    std::fs::write(out.path().join("comm_rounds.csv"), "tampered").unwrap();
    assert_eq!(verify_manifest(out.path()).unwrap(), vec!["comm_rounds.csv".to_string()]);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_slice(&std::fs::read(comm_config()).unwrap()).unwrap();
    cfg["comm"]["bandwidth"] = json!(1);
    let path = write_config(dir.path(), "bad.json", &cfg);
    let err = error_of(&run_in("comm-report", &path, &dir.path().join("out"), &[]));
    assert_eq!(err["error"]["kind"], "json");
    assert!(err["error"]["message"].as_str().unwrap().contains("bandwidth"));
}

#[test]
fn missing_config_reports_io() {
    let dir = tempfile::tempdir().unwrap();
    let err = error_of(&run_in("comm-report", &dir.path().join("nope.json"), dir.path(), &[]));
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn bad_arguments_report_usage() {
    let err = error_of(&fedtune(&["comm-report", "--config"]));
    assert_eq!(err["error"]["kind"], "usage");
    let err = error_of(&fedtune(&["train"]));
    assert_eq!(err["error"]["kind"], "usage");
    assert!(fedtune(&["--help"]).status.success());
}

#[test]
fn command_must_match_scenario() {
    let out = tempfile::tempdir().unwrap();
    let err = error_of(&run_in("finetune", &comm_config(), out.path(), &[]));
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn invalid_section_reports_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_image();
    cfg.as_object_mut().unwrap().remove("classifier");
    let path = write_config(dir.path(), "c.json", &cfg);
    let err = error_of(&run_in("pretrain", &path, &dir.path().join("out"), &[]));
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn seed_flag_controls_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "img.json", &tiny_image());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let res = run_in("pretrain", &path, &out, &["--seed", seed, "--threads", "1"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        std::fs::read(out.join("base.ckpt")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let copied: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/config.json")).unwrap()).unwrap();
    assert_eq!(copied["seed"], 7);
}

#[test]
fn finetune_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "img.json", &tiny_image());
    let out = dir.path().join("out");
    let res = run_in("finetune", &path, &out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "base.ckpt",
        "pretrain.csv",
        "rounds_rehearsal_0.5.csv",
        "rounds_rehearsal_1.csv",
        "final_rehearsal_0.5.ckpt",
        "summary.csv",
        "summary.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let rounds = std::fs::read_to_string(out.join("rounds_rehearsal_0.5.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 1 + 4);
    let summary: Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
    assert!(verify_manifest(&out).unwrap().is_empty());
}
