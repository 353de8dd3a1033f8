use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbdkit"))
}

fn scratch(name: &str, body: &Value) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cbdkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body.to_string()).unwrap();
    path
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr)))
}

fn identity_weight() -> Value {
    json!({ "d": 1, "level": 2, "kind": "matrix", "n": 2, "cells": [[1, 0, 0, 1], [1, 0, 0, 1], [1, 0, 0, 1], [1, 0, 0, 1]] })
}

#[test]
fn weights_constant_identity() {
    let w = scratch("id.json", &identity_weight());
    let out = bin().args(["weights", "--p", "2", "--in"]).arg(&w).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["ap"], json!(1.0));

    let out = bin().args(["weights", "--p", "3", "--in"]).arg(&w).arg("--pair").arg(&w).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!((stdout_json(&out)["ap"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn bmo_red_of_constant_symbols() {
    let w = scratch("id-bmo.json", &identity_weight());
    let b = json!({ "d": 1, "level": 2, "kind": "matrix", "n": 2, "cells": [[1, 2, 3, 4], [1, 2, 3, 4], [1, 2, 3, 4], [1, 2, 3, 4]] });
    let syms = scratch("syms.json", &json!([b, b]));
    for extra in [&[][..], &["--sigma", "2"][..]] {
        let out = bin()
            .args(["bmo", "--kind", "red", "--p", "2", "--symbols"])
            .arg(&syms)
            .arg("--u")
            .arg(&w)
            .arg("--v")
            .arg(&w)
            .args(extra)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(stdout_json(&out)["value"], json!(0.0));
    }
}

#[test]
fn dominate_averaging_operator() {
    let op = scratch("avg.json", &json!({ "type": "averaging", "d": 1, "level": 2 }));
    let f = scratch("f.json", &json!({ "d": 1, "level": 2, "kind": "vector", "n": 2, "cells": [[1, -2], [0, 1], [3, 0], [1, 1]] }));
    let out = bin().args(["dominate", "--eps", "0.5", "--r", "1", "--op"]).arg(&op).arg("--f").arg(&f).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = stdout_json(&out);
    assert_eq!(cert["report"]["pass"], json!(true));
    assert!(cert["family"].as_array().is_some_and(|f| !f.is_empty()));
    assert!(cert["C"].as_f64().is_some());
}

#[test]
fn malformed_input_exits_two_with_path() {
    let mut bad = identity_weight();
    bad["cells"][2][2] = json!("x");
    let w = scratch("bad.json", &bad);
    let out = bin().args(["weights", "--p", "2", "--in"]).arg(&w).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert!(err["path"].as_str().unwrap().contains("cells"), "{err}");

    let broken = std::env::temp_dir().join(format!("cbdkit-broken-{}.json", std::process::id()));
    std::fs::write(&broken, "{ \"d\": 1, ").unwrap();
    let out = bin().args(["weights", "--p", "2", "--in"]).arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out).get("error").is_some());

    let w = scratch("id-p.json", &identity_weight());
    let out = bin().args(["weights", "--p", "0.5", "--in"]).arg(&w).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg = scratch("unknown-suite.json", &json!({ "suites": ["nope"] }));
    let out = bin().args(["audit", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["path"], json!("/suites/0"));
}

#[test]
fn audit_default_passes_and_writes_report() {
    let dir = std::env::temp_dir().join(format!("cbdkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out_path = dir.join("report.json");
    let start = Instant::now();
    let out = bin().args(["audit", "--out"]).arg(&out_path).output().unwrap();
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["exact_pass"], json!(true));
    let checks = report["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().filter(|c| c["status"] == json!("exact")).all(|c| c["passed"] == json!(true)));
}

#[test]
fn zero_tolerance_makes_audit_exit_three() {
    let cfg = scratch("strict.json", &json!({ "suites": ["phi"], "trials": 3, "tolerances": { "phi_inverse": 0.0 } }));
    let out = bin().args(["audit", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["checks"], json!(["phi_inverse"]));
}
