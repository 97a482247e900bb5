//! Verifies one proposal against a scripted REPL session.

use serde_json::json;
use sorryforge::lean::{ScriptEntry, ScriptedSession};
use sorryforge::model::{timestamp, DebugInfo, ProofProposal, RecordMetadata, RepoCoordinates, SorryRecord, SourceLocation, Span};
use sorryforge::verifier::{verify_source, VerifierConfig};

const SOURCE: &str = "theorem t1 : 1 + 1 = 2 := by\n  sorry\n";

fn entry(expect: &str, response: serde_json::Value) -> ScriptEntry {
    ScriptEntry {
        expect_substring: expect.into(),
        response: Some(response),
        ..Default::default()
    }
}

fn main() {
    let record = SorryRecord::new(
        RepoCoordinates {
            remote: "https://example.org/demo.git".into(),
            branch: "main".into(),
            commit: "0".repeat(40),
            lean_version: "v4.24.0".into(),
        },
        SourceLocation::new("Demo.lean", Span { start_line: 2, start_column: 2, end_line: 2, end_column: 7 }),
        DebugInfo { goal: "⊢ 1 + 1 = 2".into(), url: String::new() },
        RecordMetadata {
            blame_email_hash: "0".repeat(64),
            blame_date: timestamp::parse("2025-01-01T00:00:00Z").unwrap(),
            inclusion_date: timestamp::parse("2025-02-01T00:00:00Z").unwrap(),
        },
    )
    .expect("valid record");
    let mut session = ScriptedSession::new(vec![
        entry(SOURCE, json!({"env": 0, "sorries": [
            {"pos": {"line": 2, "column": 2}, "endPos": {"line": 2, "column": 7}, "goal": "⊢ 1 + 1 = 2", "proofState": 0}]})),
        entry("norm_num", json!({"env": 1})),
        entry("#print axioms t1", json!({"env": 2, "messages": [
            {"severity": "info", "pos": {"line": 1, "column": 0}, "data": "'t1' depends on axioms: [propext]"}]})),
    ]);
    let proposal = ProofProposal { sorry_id: record.id.clone(), text: "norm_num".into(), origin: "example".into(), iteration: 0 };
    let verdict = verify_source(&mut session, SOURCE, &record, &proposal, &VerifierConfig::default()).expect("environment ok");
    println!("{} {:?}", verdict.status, verdict.messages);
}
