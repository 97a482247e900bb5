//! Indexes a freshly created local repository against a scripted REPL.
//! Needs `git` on PATH.

use std::collections::HashMap;
use std::process::Command;

use serde_json::json;
use sorryforge::indexer::{index_repositories, IndexContext, MockSessions, PROP_PROBE_TACTIC};
use sorryforge::lean::{Builder, ScriptEntry, WorkspaceCache};
use sorryforge::model::timestamp;
use sorryforge::registry::{RepoListing, Visibility};

const FILE: &str = "theorem easy : 1 = 1 := by sorry\ndef n : Nat := sorry\n";

fn git(dir: &std::path::Path, args: &[&str]) {
    let ok = Command::new("git")
        .current_dir(dir)
        .args(["-c", "init.defaultBranch=main", "-c", "user.name=demo", "-c", "user.email=demo@example.org"])
        .args(args)
        .status()
        .expect("git runs")
        .success();
    assert!(ok, "git {args:?}");
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = tmp.path().join("demo");
    std::fs::create_dir_all(&repo).unwrap();
    git(&repo, &["init", "-q"]);
    std::fs::write(repo.join("lean-toolchain"), "leanprover/lean4:v4.24.0\n").unwrap();
    std::fs::write(repo.join("Demo.lean"), FILE).unwrap();
    git(&repo, &["add", "-A"]);
    git(&repo, &["commit", "-qm", "init"]);

    let sorry = |line: u32, col: u32, goal: &str, ps: u64| {
        json!({"pos": {"line": line, "column": col}, "endPos": {"line": line, "column": col + 5}, "goal": goal, "proofState": ps})
    };
    let script = vec![
        ScriptEntry {
            expect_substring: FILE.into(),
            response: Some(json!({"env": 0, "sorries": [sorry(1, 27, "⊢ 1 = 1", 0), sorry(2, 15, "⊢ Nat", 1)]})),
            ..Default::default()
        },
        ScriptEntry {
            expect_substring: PROP_PROBE_TACTIC.into(),
            response: Some(json!({"proofState": 2, "goals": ["⊢ False"]})),
            ..Default::default()
        },
        ScriptEntry {
            expect_substring: PROP_PROBE_TACTIC.into(),
            response: Some(json!({"message": "Lean error: not a proposition"})),
            ..Default::default()
        },
    ];
    let listing = RepoListing {
        name: "demo".into(),
        remote: repo.to_str().unwrap().into(),
        license_id: "MIT".into(),
        last_update: timestamp::parse("2025-06-01T00:00:00Z").unwrap(),
        visibility: Visibility::Public,
        category: None,
    };
    let sessions = MockSessions::from_scripts(HashMap::from([("demo".to_string(), script)]));
    let builder = Builder::scripted_success();
    let ctx = IndexContext::new(WorkspaceCache::new(tmp.path().join("cache")), &builder, &sessions);
    let batch = index_repositories(&[listing], &ctx, 1);
    println!("{}", serde_json::to_string_pretty(&batch.summary).unwrap());
    for r in batch.records {
        println!("{} {}:{}:{} {}", &r.id[..12], r.location.path, r.location.start_line, r.location.start_column, r.debug_info.goal);
    }
}
