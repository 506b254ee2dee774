//! End-to-end tests of the `phasecrit` binary: exit codes, report
//! schema, determinism, and file round-trips.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phasecrit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn phasecrit")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout JSON")
}

/// Report text with the wall-time line removed (the only run-dependent
/// field).
fn stable_report(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| !l.contains("wall_time_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn tree_json_report() {
    let out = run(&["tree", "--delta", "3", "--b1", "0.2", "--b2", "0.2", "--lambda", "1", "--json"]);
    let v = stdout_json(&out);
    assert_eq!(v["schema"], "phasecrit/1");
    assert_eq!(v["rng"], "chacha8-splitmix64-fisheryates-v1");
    let tree = &v["results"]["tree"];
    assert_eq!(tree["regime"], "NonUniqueness");
    assert!((tree["omega"].as_f64().unwrap() - 0.0625).abs() < 1e-12);
    assert!((tree["omega_star"].as_f64().unwrap() - 4.0 / 9.0).abs() < 1e-12);
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["tree", "--delta", "3", "--b1", "0.2", "--b2", "0.2", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_subcommand_exits_2() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn computational_failure_exits_1_with_error_object() {
    // Ferromagnetic parameters are rejected by the tree analysis.
    let out = run(&["tree", "--delta", "3", "--b1", "2.0", "--b2", "2.0", "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr JSON");
    assert_eq!(v["schema"], "phasecrit/1");
    assert!(v["error"]["kind"].is_string());
    assert!(v["error"]["message"].is_string());
}

#[test]
fn reports_are_byte_identical_excluding_wall_time() {
    let args = ["tree", "--delta", "4", "--b1", "0.0", "--b2", "1.0", "--lambda", "2.0", "--json"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(stable_report(&a), stable_report(&b));
    assert_ne!(stable_report(&a), "");

    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    let gs = g.to_str().unwrap();
    let sample = ["sample", "--n", "6", "--delta", "3", "--seed", "11", "--out", gs];
    run(&sample);
    let first = std::fs::read_to_string(&g).unwrap();
    run(&sample);
    assert_eq!(first, std::fs::read_to_string(&g).unwrap());
}

#[test]
fn sample_then_oracle_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    let gs = g.to_str().unwrap();
    let out = run(&["sample", "--n", "6", "--delta", "3", "--seed", "5", "--out", gs]);
    assert!(out.status.success());
    assert!(Path::new(gs).exists());

    let out = run(&["oracle", "--graph", gs, "--b1", "0", "--b2", "1", "--lambda", "2", "--json"]);
    let v = stdout_json(&out);
    assert!(v["results"]["log_z"].as_f64().unwrap().is_finite());

    // Occupancy table sums back to the partition function.
    let csv = dir.path().join("table.csv");
    let out = run(&[
        "oracle", "--graph", gs, "--b1", "0", "--b2", "1", "--lambda", "2",
        "--table", "--csv", csv.to_str().unwrap(), "--json",
    ]);
    let v = stdout_json(&out);
    assert!(v["results"]["log_z"].as_f64().unwrap().is_finite());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("a,b,log_z\n"));
    // Hard-core model: fully occupied classes are empty → "-inf" sentinel.
    assert!(text.contains("-inf"));
    assert_eq!(text.lines().count(), 1 + 7 * 7);
}

#[test]
fn gadget_emits_params_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("gadget.json");
    let out = run(&[
        "gadget", "--n", "6", "--delta", "3", "--theta", "0.05", "--psi", "0.7",
        "--seed", "3", "--out", g.to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["results"]["degree_audit"]["w_degree"], 3);
    let gj: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&g).unwrap()).unwrap();
    assert_eq!(gj["kind"], "gadget");
}

#[test]
fn sweep_csv_shape() {
    let out = run(&["sweep", "--preset", "ising-delta3", "--b-grid", "0.05:0.30:0.05"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.trim().lines().collect();
    assert_eq!(lines[0], "b,omega,omega_star,regime");
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[1].ends_with("NonUniqueness"));
}

#[test]
fn sweep_unknown_preset_exits_2() {
    let out = run(&["sweep", "--preset", "nope", "--b-grid", "0.1:0.2:0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn moments_ratio_mode() {
    let out = run(&["moments", "--delta", "3", "--b1", "0.2", "--b2", "0.2", "--ratio", "--json"]);
    let v = stdout_json(&out);
    let ratio = v["results"]["ratio_limit"].as_f64().unwrap();
    let expected = (256.0 / 255.0) * (64.0f64 / 63.0).sqrt();
    assert!((ratio - expected).abs() < 1e-12, "ratio {ratio}");
}

#[test]
fn smallgraph_report_contains_tail_bound() {
    let out = run(&["smallgraph", "--delta", "3", "--b1", "0.2", "--max-len", "12", "--json"]);
    let v = stdout_json(&out);
    let c = &v["results"]["conditioning"];
    assert_eq!(c["lengths"][0], 2);
    assert!(c["tail_bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn appendix_verify_dumps_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let out = run(&[
        "appendix-verify", "--d", "2", "--samples", "50",
        "--dump-certificate", cert.to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["results"]["pass"], true);
    let c: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(c["certificate"]["coefficients"][0]["name"], "c00");
}
