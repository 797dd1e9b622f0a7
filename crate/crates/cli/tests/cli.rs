use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn crl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crl")).args(args).output().expect("spawn crl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
n_per_env = 2000
seeds = [0]

[train]
epochs = 2
batch_size = 256
"#;

#[test]
fn generate_writes_env_files_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("data");
    let o = crl(&["generate", "--d", "6", "--p", "0.5", "--n", "100000", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for e in 0..6 {
        assert!(out.join(format!("env_{e}.csv")).exists());
    }
    assert!(!out.join("env_6.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["mixing"].as_array().unwrap().len(), 6);
}

#[test]
fn empty_graph_has_no_edges_and_manifest_regenerates() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = crl(&["generate", "--d", "4", "--p", "0", "--n", "6000", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0 edges"));
    let manifest = a.join("manifest.json");
    let o = crl(&["generate", "--manifest", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(a.join("dataset.crl")).unwrap(), fs::read(b.join("dataset.crl")).unwrap());
}

#[test]
fn bad_design_file_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let bad = write(tmp.path(), "bad.json", "{\"d\": 3, \"regimes\": [{\"targets\": [7], \"values\": [1.0]}]}");
    let o = crl(&["generate", "--d", "3", "--n", "100", "--design", &bad, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = crl(&["check-design", "--design", "/nonexistent/design.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_design_reports() {
    let tmp = TempDir::new().unwrap();
    // supports {2}, {2}, {0, 1}
    let failing = write(
        tmp.path(),
        "s.json",
        r#"{"d": 3, "regimes": [
            {"targets": [0, 1], "values": [0.0, 1.0]},
            {"targets": [0, 1], "values": [1.0, 0.0]},
            {"targets": [2], "values": [0.5]}]}"#,
    );
    let o = crl(&["check-design", "--design", &failing]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("index 0: missing [1]") && text.contains("index 1: missing [0]"), "{text}");

    let o = crl(&["check-design", "--design", "leave-one-out", "--d", "6"]);
    assert!(o.status.success());
    let o = crl(&["check-design", "--design", "separating", "--d", "16"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("8 environments"));
}

#[test]
fn train_and_evaluate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let data = tmp.path().join("data");
    assert!(crl(&["generate", "--config", &cfg, "--d", "3", "--out", data.to_str().unwrap()]).status.success());
    let dataset = data.join("dataset.crl");

    let run = |seed: &str, out: &str| {
        let dir = tmp.path().join(out);
        let o = crl(&["train", "--config", &cfg, "--dataset", dataset.to_str().unwrap(), "--seed", seed, "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("test MCC"));
        dir
    };
    let a = run("1", "m1");
    let b = run("2", "m2");
    assert!(a.join("train_report.json").exists());
    let csv = fs::read_to_string(a.join("train_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_ne!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(b.join("model.ckpt")).unwrap());

    let ckpt = a.join("model.ckpt");
    let o = crl(&["evaluate", "--dataset", dataset.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success());
    let row: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(row["method"], "ours");
    assert_eq!(row["d"], 3);
    let mcc = row["mcc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mcc));

    let o = crl(&["evaluate", "--dataset", dataset.to_str().unwrap(), "--fastica"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"fastica\""));
}

#[test]
fn missing_dataset_fails() {
    let o = crl(&["train", "--dataset", "/nonexistent/dataset.crl"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn divergent_training_is_a_numerical_abort() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "n_per_env = 1000\nseeds = [0]\n[train]\nepochs = 3\nbatch_size = 100\nlearning_rate = 1e300\n",
    );
    let data = tmp.path().join("data");
    assert!(crl(&["generate", "--config", &cfg, "--d", "3", "--out", data.to_str().unwrap()]).status.success());
    let o = crl(&["train", "--config", &cfg, "--dataset", data.join("dataset.crl").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reproduce_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let render = |dir: &str| {
        let out = tmp.path().join(dir);
        let o = crl(&["reproduce", "table1", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(out.join("table1.csv")).unwrap(), fs::read(out.join("table1_summary.csv")).unwrap())
    };
    let a = render("r1");
    assert_eq!(a, render("r2"));
    let rows = String::from_utf8(a.0).unwrap();
    assert!(rows.starts_with("setting,seed,method,d,p,n,mcc,status"));
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
    let summary = String::from_utf8(a.1).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("scm1,ours,1,0,"));

    let o = crl(&["reproduce", "fig9"]);
    assert_eq!(o.status.code(), Some(1));
}
