//! End-to-end runs of the `truthfuse` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn truthfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_truthfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_fuse_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let claims = dir.path().join("claims.csv");
    let gold = dir.path().join("gold.csv");
    let probs = dir.path().join("probs.csv");
    let summary = dir.path().join("summary.json");

    let out = truthfuse(&["synth", "--seed", "7", "--out-claims", s(&claims), "--out-gold", s(&gold)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = truthfuse(&["fuse", "--claims", s(&claims), "--out", s(&probs), "--summary", s(&summary)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(summary["method"], "hybrid");

    let out = truthfuse(&["eval", "--pred", s(&probs), "--gold", s(&gold)]);
    assert!(out.status.success());
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["f1"].as_f64().unwrap() > 0.8, "{metrics}");
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let claims = dir.path().join(format!("claims{run}.csv"));
        let gold = dir.path().join(format!("gold{run}.csv"));
        assert!(truthfuse(&["synth", "--seed", "7", "--out-claims", s(&claims), "--out-gold", s(&gold)])
            .status
            .success());
        files.push((std::fs::read(claims).unwrap(), std::fs::read(gold).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn fuse_accu_on_gear() {
    let dir = tempfile::tempdir().unwrap();
    let probs = dir.path().join("probs.csv");
    let out = truthfuse(&[
        "fuse",
        "--method",
        "accu",
        "--claims",
        s(&data("gear.csv")),
        "--config",
        s(&data("gear_config.json")),
        "--out",
        s(&probs),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&probs).unwrap();
    let mut d1: Vec<(String, f64)> = text
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("d1,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    d1.sort_by(|a, b| a.0.cmp(&b.0));
    let want = [("boots", 0.03125), ("helmet", 0.46875), ("skis", 0.03125), ("stick", 0.46875)];
    for ((v, p), (wv, wp)) in d1.iter().zip(want) {
        assert_eq!(v, wv);
        assert!((p - wp).abs() < 1e-9, "{v}: {p}");
    }
}

#[test]
fn compare_reports_one_row_per_method() {
    let out = truthfuse(&["compare", "--methods", "hybrid,accu", "--reps", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,grid_param,grid_value,precision,recall,f1,n_reps"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("hybrid,") && rows[1].starts_with("accu,"));
    assert!(rows.iter().all(|r| r.ends_with(",20")));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(truthfuse(&["fuse", "--method", "nope", "--claims", "x", "--out", "y"]).status.code(), Some(2));
    assert_eq!(truthfuse(&["fuse", "--claims", "/no/such/file.csv", "--out", "/tmp/o.csv"]).status.code(), Some(2));
    assert_eq!(truthfuse(&["compare", "--threads", "0"]).status.code(), Some(2));
}
