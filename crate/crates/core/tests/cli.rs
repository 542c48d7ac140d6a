use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn readmit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_readmit"))
        .args(args)
        .current_dir(dir)
        .env_remove("READMIT_OUT_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = readmit(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SPEC: &str = "n_patients = 400\nseed = 3\n[coefficients]\ncci_score = 0.4\nacute_admission = 0.6\n";

fn cohort(dir: &Path) {
    std::fs::write(dir.join("spec.toml"), SPEC).unwrap();
    ok(dir, &["generate", "--spec", "spec.toml", "--out", "c.jsonl"]);
}

#[test]
fn generate_is_deterministic_and_counts_patients() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("spec.toml"), SPEC).unwrap();
    ok(p, &["generate", "--spec", "spec.toml", "--seed", "42", "--out", "a.jsonl"]);
    ok(p, &["generate", "--spec", "spec.toml", "--seed", "42", "--out", "b.jsonl"]);
    assert_eq!(digest(&p.join("a.jsonl")), digest(&p.join("b.jsonl")));
    ok(p, &["generate", "--spec", "spec.toml", "--seed", "43", "--out", "c.jsonl"]);
    assert_ne!(digest(&p.join("a.jsonl")), digest(&p.join("c.jsonl")));

    ok(p, &["generate", "--n-patients", "10000", "--out", "big.jsonl"]);
    let text = std::fs::read_to_string(p.join("big.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 10_000);
    let m = json(&p.join("big.jsonl.manifest.json"));
    assert_eq!(m["invocation"]["spec"]["n_patients"], 10_000);
    assert_eq!(m["outputs"][0]["sha256"], digest(&p.join("big.jsonl")).as_str());
}

#[test]
fn missing_spec_is_a_config_error_naming_the_path() {
    let d = tempfile::tempdir().unwrap();
    let out = readmit(d.path(), &["generate", "--spec", "nowhere/spec.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/spec.toml"));
    let out = readmit(d.path(), &["evaluate", "--input", "missing.jsonl", "--models", "lace-lr"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
    let out = readmit(d.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_var_sets_default_output_directory() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_readmit"))
        .args(["generate", "--n-patients", "5"])
        .current_dir(d.path())
        .env("READMIT_OUT_DIR", "outputs")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("outputs/cohort.jsonl").exists());
    assert!(d.path().join("outputs/cohort.jsonl.manifest.json").exists());
}

#[test]
fn train_both_models_and_explain() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    cohort(p);
    ok(p, &["train-baseline", "--input", "c.jsonl", "--out", "lace.json"]);
    let m = json(&p.join("lace.json"));
    assert_eq!(m["model"]["coefficients"].as_array().unwrap().len(), 4);
    assert!(m["model"]["intercept"].is_f64());

    ok(p, &["train", "--model", "lstm", "--input", "c.jsonl", "--max-epochs", "1", "--exclude-features", "age", "--out", "lstm.ckpt"]);
    let ck = json(&p.join("lstm.ckpt"));
    let names: Vec<&str> = ck["registry"]["features"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert!(!names.contains(&"age") && names.len() == 13);
    assert_eq!(json(&p.join("lstm.ckpt.log.json"))["epochs"].as_array().unwrap().len(), 1);

    // The checkpoint reloads and scores the cohort.
    ok(p, &["explain-permutation", "--input", "c.jsonl", "--model", "lstm.ckpt", "--n-repeats", "2", "--features", "cci_score,los_days", "--out-dir", "perm"]);
    let csv = std::fs::read_to_string(p.join("perm/permutation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    ok(p, &["train-baseline", "--input", "c.jsonl", "--exclude-features", "ed_visits_6mo", "--out", "lace3.json"]);
    ok(p, &["explain-permutation", "--input", "c.jsonl", "--model", "lace3.json", "--out-dir", "perm3"]);
    let csv = std::fs::read_to_string(p.join("perm3/permutation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus three features");

    ok(p, &["explain-shap", "--input", "c.jsonl", "--model", "lace.json", "--mode", "exact", "--max-instances", "3", "--background-size", "25", "--out-dir", "shap"]);
    let shap = json(&p.join("shap/shap.json"));
    for e in shap["explanations"].as_array().unwrap() {
        assert!(e["metadata"]["efficiency_residual"].as_f64().unwrap() < 1e-9);
        assert_eq!(e["metadata"]["mode"]["mode"], "exact");
    }
    let force = json(&p.join("shap/force_plot.json"));
    assert_eq!(force["explanations"].as_array().unwrap().len(), 3);

    let out = readmit(p, &["explain-shap", "--input", "c.jsonl", "--model", "lace.json", "--features", "height", "--out-dir", "bad"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("height") && err.contains("cci_score"), "{err}");
    let out = readmit(p, &["train-baseline", "--input", "c.jsonl", "--exclude-features", "weight"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_compares_models_and_reruns_identically() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    cohort(p);
    std::fs::write(p.join("run.toml"), "[train]\nmax_epochs = 2\npatience = 1\n[train.network]\nhidden1 = 4\nhidden2 = 4\n[split]\nn_repeats = 3\n").unwrap();
    ok(p, &["evaluate", "--config", "run.toml", "--input", "c.jsonl", "--out-dir", "ev"]);
    let cmp = std::fs::read_to_string(p.join("ev/comparison.csv")).unwrap();
    assert_eq!(cmp.lines().next().unwrap(), "repeat,seed,auc_lace-lr,auc_lstm");
    assert_eq!(cmp.lines().count(), 4);
    let rep = json(&p.join("ev/report_lstm.json"));
    assert_eq!(rep["repeats"].as_array().unwrap().len(), 3);
    assert!(rep["aggregates"]["auc"]["ci_low"].is_f64());

    ok(p, &["rerun", "--manifest", "ev/manifest.json", "--out-dir", "ev2", "--verify"]);
    for f in ["report_lace-lr.json", "report_lstm.json", "report_lstm.csv", "comparison.csv"] {
        assert_eq!(digest(&p.join("ev").join(f)), digest(&p.join("ev2").join(f)), "{f}");
    }
    // Flags win over the config file.
    ok(p, &["evaluate", "--config", "run.toml", "--input", "c.jsonl", "--models", "lace-lr", "--n-repeats", "1", "--out-dir", "one"]);
    let rep = json(&p.join("one/report_lace-lr.json"));
    assert_eq!(rep["repeats"].as_array().unwrap().len(), 1);
    assert!(rep["aggregates"]["auc"]["ci_low"].is_null());
    assert!(!p.join("one/comparison.csv").exists());
}
