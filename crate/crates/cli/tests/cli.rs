use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use taxfund_core::artifacts::{RunManifest, Stage, WorkDir};
use taxfund_core::cost::CostEstimate;
use taxfund_service::Bundle;

fn taxfund(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxfund"))
        .current_dir(root)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(args)
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) -> Value {
    let out = taxfund(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).to_string_lossy().into_owned()
}

fn prepared(size: &str) -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    for s in [vec!["synth", "--size", size], vec!["ingest"], vec!["cluster"], vec!["train-income"], vec!["forecast"], vec!["eligibility"]] {
        ok(root.path(), &s);
    }
    root
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["synth", "--size", "small", "--seed", "3"]);
    ok(b.path(), &["synth", "--size", "small", "--seed", "3", "--jobs", "2"]);
    for f in ["parcels.csv", "assessments.csv", "policy.json", "ground_truth.json", "manifest.json"] {
        assert_eq!(read(a.path().join("data").join(f)), read(b.path().join("data").join(f)), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["synth", "--size", "small", "--seed", "4"]);
    assert_ne!(read(a.path().join("data/parcels.csv")), read(c.path().join("data/parcels.csv")));
}

#[test]
fn missing_stage_is_reported_as_json() {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["synth", "--size", "small"]);
    ok(root.path(), &["ingest"]);
    let out = taxfund(root.path(), &["forecast"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "missing_stage");
    assert!(err["error"]["message"].as_str().unwrap().contains("cluster"));

    let empty = tempfile::tempdir().unwrap();
    let out = taxfund(empty.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["code"].is_string());
}

#[test]
fn bad_scenario_is_rejected() {
    let root = prepared("small");
    let bad = root.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "bad", "dropout_rate": 1.5}"#).unwrap();
    let out = taxfund(root.path(), &["simulate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "invalid_scenario");
}

#[test]
fn cluster_count_follows_k() {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["synth", "--size", "small"]);
    ok(root.path(), &["ingest"]);
    for k in [3, 4] {
        ok(root.path(), &["cluster", "--k", &k.to_string()]);
        let model: Value = serde_json::from_slice(&read(root.path().join("work/cluster/cluster_model.json"))).unwrap();
        assert_eq!(model["k"], k);
        assert_eq!(model["cluster_sizes"].as_array().unwrap().len(), k);
    }
}

#[test]
fn cli_and_api_give_the_same_estimate() {
    let root = prepared("small");
    let path = scenario("table3_wp_liens.json");
    let summary = ok(root.path(), &["simulate", "--scenario", &path, "--replicates", "200"]);
    let dir = PathBuf::from(summary["dir"].as_str().unwrap());
    let cli: CostEstimate = serde_json::from_slice(&read(root.path().join(&dir).join("cost_estimate.json"))).unwrap();

    let bundle = Bundle::load(&root.path().join("data"), &root.path().join("data/policy.json"), &WorkDir::new(root.path().join("work"))).unwrap();
    let mut sc = scenario_file(&path);
    sc.replicates = 200;
    let api = bundle.run_scenario(&sc).unwrap();
    assert_eq!(serde_json::to_string(&cli).unwrap(), serde_json::to_string(&api).unwrap());
    assert!(cli.mean_total_cost > 0.0);
}

fn scenario_file(path: &str) -> taxfund_core::cost::ScenarioConfig {
    serde_json::from_slice(&read(path)).unwrap()
}

#[test]
fn manifest_command_reproduces_outputs() {
    let root = prepared("small");
    let path = scenario("legacy_original.json");
    ok(root.path(), &["simulate", "--scenario", &path, "--replicates", "100", "--seed", "9"]);
    let dir = root.path().join("work/simulate/legacy_original");
    let before = read(dir.join("cost_estimate.json"));
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!(m.stage, Stage::Simulate);
    assert_eq!(m.seed, 9);
    assert!(m.outputs.contains_key("cost_estimate.json"));

    std::fs::remove_dir_all(&dir).unwrap();
    let args: Vec<&str> = m.command.iter().map(String::as_str).collect();
    ok(root.path(), &args);
    assert_eq!(read(dir.join("cost_estimate.json")), before);

    let forecast = RunManifest::read(&root.path().join("work/forecast")).unwrap();
    let before = read(root.path().join("work/forecast/forecast.json"));
    let args: Vec<&str> = forecast.command.iter().map(String::as_str).collect();
    ok(root.path(), &args);
    assert_eq!(read(root.path().join("work/forecast/forecast.json")), before);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let runs: Vec<tempfile::TempDir> = ["1", "4"]
        .iter()
        .map(|jobs| {
            let root = tempfile::tempdir().unwrap();
            for s in [vec!["synth", "--size", "small"], vec!["ingest"], vec!["cluster"], vec!["train-income"], vec!["forecast"], vec!["eligibility"]] {
                let mut args = s.clone();
                args.extend(["--jobs", jobs]);
                ok(root.path(), &args);
            }
            root
        })
        .collect();
    for f in [
        "work/cluster/cluster_model.json",
        "work/cluster/manifest.json",
        "work/train-income/income_model.json",
        "work/forecast/classifier.json",
        "work/forecast/importance.json",
        "work/forecast/forecast.csv",
        "work/eligibility/eligibility.json",
        "work/eligibility/manifest.json",
    ] {
        assert_eq!(read(runs[0].path().join(f)), read(runs[1].path().join(f)), "{f}");
    }
}

#[test]
fn stale_inputs_are_detected() {
    let root = prepared("small");
    let parcels = root.path().join("data/parcels.csv");
    let mut text = read(&parcels);
    text.extend_from_slice(b"\n");
    std::fs::write(&parcels, text).unwrap();
    let out = taxfund(root.path(), &["cluster"]);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "stale_input");
}

#[test]
fn every_subcommand_has_help() {
    let root = tempfile::tempdir().unwrap();
    for sub in ["synth", "ingest", "cluster", "train-income", "forecast", "eligibility", "simulate", "serve"] {
        let out = taxfund(root.path(), &[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("Usage:") && text.contains("--seed"), "{sub}");
    }
}
