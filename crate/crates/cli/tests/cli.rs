use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn falsify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_falsify"))
        .args(args)
        .output()
        .expect("runs the binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// setup1 shrunk to a quick size, with enough censoring in every stratum.
fn small_config(dir: &Path, edit: impl FnOnce(&mut Value)) -> String {
    let o = falsify(&["preset", "setup1"]);
    let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
    v["dgp"]["n"] = serde_json::json!({"rct": 200, "os": 300});
    for s in ["rct", "os"] {
        for a in ["control", "treated"] {
            v["dgp"]["censoring"][s][a]["lambda"] = serde_json::json!(0.3);
        }
    }
    v["replications"] = serde_json::json!(3);
    v["bootstrap_b"] = serde_json::json!(20);
    v["signal_kinds"] = serde_json::json!(["cdr", "ipcw"]);
    edit(&mut v);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn preset_listing() {
    let o = falsify(&["preset", "--list"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(names.len(), 28);
    assert!(names.contains(&"gc_null".to_string()));
    assert_eq!(falsify(&["preset", "setup9"]).status.code(), Some(2));
}

#[test]
fn run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), |_| {});
    let out = dir.path().join("table.csv");
    let o = falsify(&["run", "--config", &config, "--jobs", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("setup,signal,rejection_rate"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = small_config(dir.path(), |v| v["alpha"] = serde_json::json!(1.5));
    assert_eq!(falsify(&["run", "--config", &bad]).status.code(), Some(2));
    assert_eq!(falsify(&["run", "--config", "/nonexistent.json"]).status.code(), Some(2));

    // trimming away everyone fails every replication
    let hopeless = small_config(dir.path(), |v| v["trim"] = serde_json::json!({"lower": 0.999, "upper": 1.0}));
    let o = falsify(&["run", "--config", &hopeless, "--jobs", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_then_test_then_witness() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), |_| {});
    let cohort = dir.path().join("cohort.csv");
    let cohort = cohort.to_str().unwrap();
    let o = falsify(&["simulate", "--config", &config, "--out", cohort, "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = falsify(&["test", "--cohort", cohort, "--signal", "cdr", "--bootstrap", "30", "--ridge", "0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = summary["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);

    let grid = dir.path().join("witness.csv");
    let o = falsify(&[
        "witness",
        "--cohort",
        cohort,
        "--grid",
        "nnhealth=-2:2:5",
        "--out",
        grid.to_str().unwrap(),
        "--ridge",
        "0.1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&grid).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().next().unwrap().ends_with("witness"));
}

#[test]
fn negative_ridge_is_a_config_error() {
    let o = falsify(&["test", "--cohort", "/nonexistent.csv", "--ridge", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prop2_lines() {
    let o = falsify(&["oracle-prop2", "--draws", "40000", "--seed", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.contains("ipw_ytilde")));
    assert!(text.lines().any(|l| l.contains("cdr")));
}
