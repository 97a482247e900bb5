//! Runs a tactic prover and a scripted self-correcting LLM prover on one task.

use sorryforge::model::{timestamp, DebugInfo, RecordMetadata, RepoCoordinates, SorryRecord, SourceLocation, Span};
use sorryforge::provers::{Prover, ProverSpec, ProverTask, ScriptedClient, ScriptedCompletion};
use sorryforge::verifier::TableChecker;

fn main() {
    let record = SorryRecord::new(
        RepoCoordinates {
            remote: "https://example.org/demo.git".into(),
            branch: "main".into(),
            commit: "0".repeat(40),
            lean_version: "v4.24.0".into(),
        },
        SourceLocation::new("Demo.lean", Span { start_line: 1, start_column: 31, end_line: 1, end_column: 36 }),
        DebugInfo { goal: "⊢ 2 + 2 = 4".into(), url: String::new() },
        RecordMetadata {
            blame_email_hash: "0".repeat(64),
            blame_date: timestamp::parse("2025-01-01T00:00:00Z").unwrap(),
            inclusion_date: timestamp::parse("2025-02-01T00:00:00Z").unwrap(),
        },
    )
    .expect("valid record");
    let task = ProverTask::new(record, "theorem four : 2 + 2 = 4 := by sorry\n");
    let checker = TableChecker::from_json(r#"{"accept": {"⊢ 2 + 2 = 4": ["decide", "norm_num"]}}"#).unwrap();

    let tactic: ProverSpec =
        serde_json::from_str(r#"{"id": "tactics", "group": "Deterministic", "strategy": "tactic"}"#).unwrap();
    let loop_spec: ProverSpec =
        serde_json::from_str(r#"{"id": "loop", "group": "Iterative", "strategy": "self_correct", "max_iter": 4}"#).unwrap();
    let client = ScriptedClient::new(vec![
        ScriptedCompletion::text("```lean\nomega\n```", 800, 20),
        ScriptedCompletion::text("```lean\ndecide\n```", 950, 18),
    ]);
    let provers = [Prover::from_spec(tactic).unwrap(), Prover::with_client(loop_spec, client).unwrap()];
    for p in &provers {
        let run = p.run(&task, &mut checker.clone()).expect("prover runs");
        let tried: Vec<_> = run.attempts.iter().map(|a| format!("{} => {}", a.proposal.text, a.verdict.status)).collect();
        println!("{}: solved={} tokens={} [{}]", p.id(), run.solved(), run.tokens().total(), tried.join(", "));
    }
}
