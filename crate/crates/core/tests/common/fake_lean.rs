//! A stand-in for Lean elaboration over a tiny fixture dialect, used to
//! script mock REPL sessions.
//!
//! Every line holding a sorry has the form `theorem NAME : PROP := by sorry`,
//! `lemma NAME : PROP := by sorry` or `def NAME : TYPE := sorry`. Theorems
//! and lemmas are propositions with goal `⊢ PROP`; defs are data with goal
//! `⊢ TYPE`. Fixture files contain no comments or strings.

use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};
use sorryforge::indexer::PROP_PROBE_TACTIC;
use sorryforge::lean::ScriptEntry;

pub struct FakeSorry {
    pub line: u32,
    pub column: u32,
    pub goal: String,
    pub is_prop: bool,
}

pub fn sorries(text: &str) -> Vec<FakeSorry> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(byte) = line.find("sorry") else { continue };
        let column = line[..byte].chars().count() as u32;
        let is_prop = line.starts_with("theorem ") || line.starts_with("lemma ");
        let ty = line
            .split_once(" : ")
            .and_then(|(_, rest)| rest.split_once(" := "))
            .map(|(ty, _)| ty.trim().to_string())
            .unwrap_or_default();
        out.push(FakeSorry {
            line: i as u32 + 1,
            column,
            goal: format!("⊢ {ty}"),
            is_prop,
        });
    }
    out
}

/// REPL answer for elaborating `text`, numbering proof states from `next_state`.
pub fn elaboration(text: &str, env: u64, next_state: &mut u64) -> Value {
    let mut sorries = Vec::new();
    let mut messages = Vec::new();
    for s in self::sorries(text) {
        sorries.push(json!({
            "pos": {"line": s.line, "column": s.column},
            "endPos": {"line": s.line, "column": s.column + 5},
            "goal": s.goal,
            "proofState": *next_state,
        }));
        *next_state += 1;
        messages.push(json!({
            "severity": "warning",
            "pos": {"line": s.line, "column": 0},
            "data": "declaration uses 'sorry'",
        }));
    }
    json!({"env": env, "messages": messages, "sorries": sorries})
}

fn git(repo: &Path, args: &[&str]) -> String {
    let out = Command::new("git").current_dir(repo).args(args).output().expect("git runs");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).expect("utf-8")
}

/// Script answering exactly the requests the indexer sends for `repo`:
/// branches in name order, `.lean` files with hits in path order, one
/// elaboration per file then one probe per hit.
pub fn index_script(repo: &Path) -> Vec<ScriptEntry> {
    let mut branches: Vec<String> = git(repo, &["for-each-ref", "--format=%(refname:short)", "refs/heads"])
        .lines()
        .map(str::to_string)
        .collect();
    branches.sort();
    let mut entries = Vec::new();
    let mut state = 0;
    for (env, branch) in branches.iter().enumerate() {
        let mut files: Vec<String> = git(repo, &["ls-tree", "-r", "--name-only", branch])
            .lines()
            .filter(|f| f.ends_with(".lean"))
            .map(str::to_string)
            .collect();
        files.sort();
        for file in files {
            let text = git(repo, &["show", &format!("{branch}:{file}")]);
            let found = sorries(&text);
            if found.is_empty() {
                continue;
            }
            let first_state = state;
            entries.push(ScriptEntry {
                expect_substring: text.clone(),
                response: Some(elaboration(&text, env as u64, &mut state)),
                ..Default::default()
            });
            for (i, s) in found.iter().enumerate() {
                let ps = first_state + i as u64;
                let response = if s.is_prop {
                    json!({"proofState": 10_000 + ps, "goals": ["⊢ False"]})
                } else {
                    json!({"message": format!("Lean error:\ntype mismatch: {} is not a proposition", s.goal)})
                };
                entries.push(ScriptEntry {
                    expect_substring: PROP_PROBE_TACTIC.to_string(),
                    response: Some(response),
                    ..Default::default()
                });
            }
        }
    }
    entries
}
