mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sorryforge::db::{save_database, Database};
use sorryforge::model::{timestamp, DatasetSnapshot};

use common::criteria::{self, fixtures, scenarios, VERIFY_SOURCE};

fn sorryforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sorryforge"))
        .args(args)
        .env_remove("SORRYFORGE_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(sorryforge(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sorryforge(&["select", "--db", "x.json", "--n", "0"]).status.code(), Some(2));
    assert_eq!(sorryforge(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let out = sorryforge(&["dedup", "--db", "/nonexistent/db.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn select_prints_the_round_robin_slice() {
    let out = sorryforge(&["select", "--db", s(&fixtures().join("db/abc.json")), "--n", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let slice: Value = serde_json::from_slice(&out.stdout).unwrap();
    let ids: Vec<&str> = slice["sorries"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(fixtures().join("db/abc_expected.json")).unwrap()).unwrap();
    let want: Vec<&str> = expected["n4"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(ids, want);
    assert_eq!(slice["name"], "abc");
}

fn verify_with(scenario: &str, dir: &Path) -> (Output, Value) {
    let record = criteria::verify_record();
    let db = dir.join("db.json");
    let snapshot = DatasetSnapshot::new("v", timestamp::parse("2026-01-31T00:00:00Z").unwrap(), vec![record.clone()], Default::default());
    save_database(&Database { path: db.clone(), snapshot }).unwrap();
    let ws = dir.join("ws");
    std::fs::create_dir_all(&ws).unwrap();
    std::fs::write(ws.join("V.lean"), VERIFY_SOURCE).unwrap();

    let sc = scenarios().into_iter().find(|x| x.name == scenario).unwrap();
    let mut script = vec![criteria::baseline_entry()];
    script.extend(sc.after);
    let mock = dir.join(format!("{scenario}.json"));
    std::fs::write(&mock, serde_json::to_string(&script).unwrap()).unwrap();
    let proposal = dir.join("proposal.lean");
    std::fs::write(&proposal, format!("{}\n", sc.proposal)).unwrap();

    let out = sorryforge(&[
        "verify", "--db", s(&db), "--id", &record.id[..12], "--proposal", s(&proposal), "--workspace", s(&ws), "--mock",
        s(&mock),
    ]);
    let verdict = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out, verdict)
}

#[test]
fn verify_rejects_sorry_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (out, v) = verify_with("proposal sorry", dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(v["status"], "SorryCountUnchanged", "{v}");
}

#[test]
fn verify_accepts_a_clean_proof() {
    let dir = tempfile::tempdir().unwrap();
    let (out, v) = verify_with("clean success", dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(v["status"], "Accepted");
    assert_eq!(v["sorry_id"], criteria::verify_record().id);
}

#[test]
fn offline_pipeline_end_to_end() {
    let p = criteria::end_to_end().unwrap();
    assert_eq!(p.slice.records.len(), 10);
    assert_eq!(p.run_count, 30);
    assert_eq!(criteria::combined_row(&p.report), Some((p.union.len(), 10)));
    assert_eq!(p.union.len(), 5);
    assert!(p.report.contains("| tactics | 20.0% | n/a |"), "{}", p.report);
    assert!(p.report.contains("| sampler | 20.0% | 20.0% |"), "{}", p.report);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(p.dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["totals"]["non_prop"], 2);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(p.dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tasks"], 10);
}
