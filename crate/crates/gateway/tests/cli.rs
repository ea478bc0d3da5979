use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cfuqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfuqc")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_run_report_export() {
    let dir = tempfile::tempdir().unwrap();
    let plates = dir.path().join("plates");
    let store = dir.path().join("store");

    let out = cfuqc(&["gen", "--seed", "1", "--count", "50", "--invalid-frac", "0.2", "--out", s(&plates)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g = stdout_json(&out);
    assert_eq!((g["plates"].as_u64(), g["invalid"].as_u64()), (Some(50), Some(10)));

    let manifest = plates.join("manifest.json");
    let out = cfuqc(&["run", "--manifest", s(&manifest), "--delta", "0.05", "--store", s(&store), "--run-id", "batch-1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = stdout_json(&out);
    assert_eq!(stats["plates_total"], 50);
    assert_eq!(stats["processed"], 50);
    assert!(stats["escalated_invalid"].as_u64().unwrap() >= 9);

    // Rerunning the same manifest is a no-op.
    let again = cfuqc(&["run", "--manifest", s(&manifest), "--store", s(&store), "--run-id", "batch-1"]);
    assert_eq!(stdout_json(&again)["counter_invocations"], stats["counter_invocations"]);

    let out = cfuqc(&["report", "--store", s(&store), "--run-id", "batch-1"]);
    assert!(out.status.success());
    assert!(!out.stdout.is_empty());

    let out = cfuqc(&["verify-audit", "--store", s(&store)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["ok"], true);

    // Escalations are still open, so the run cannot be exported yet.
    let out = cfuqc(&["export", "--store", s(&store), "--run-id", "batch-1", "--out", s(&dir.path().join("qm"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_on_an_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfuqc(&["report", "--store", s(&dir.path().join("empty"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cfuqc(&["report", "--json", "--store", s(&dir.path().join("empty"))]);
    assert!(stdout_json(&out).is_object());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cfuqc(&["gen", "--bogus"]).status.code(), Some(2));
    assert_eq!(cfuqc(&[]).status.code(), Some(2));
    let out = cfuqc(&["gen", "--invalid-frac", "1.5", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = cfuqc(&["run", "--manifest", s(&dir.path().join("missing.json")), "--store", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = cfuqc(&["run", "--manifest", "m.json", "--delta", "-1", "--store", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "latency_budget_ms = 0\n").unwrap();
    let out = cfuqc(&["run", "--manifest", "m.json", "--config", s(&cfg), "--store", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tampered_audit_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let plates = dir.path().join("p");
    let store = dir.path().join("s");
    assert!(cfuqc(&["gen", "--count", "3", "--out", s(&plates)]).status.success());
    assert!(cfuqc(&["run", "--manifest", s(&plates.join("manifest.json")), "--store", s(&store)]).status.success());
    let log = store.join(cfuqc_core::store::AUDIT_FILE);
    let text = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, text.replacen("\"system\"", "\"systen\"", 1)).unwrap();
    let out = cfuqc(&["verify-audit", "--store", s(&store)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["ok"], false);
}
