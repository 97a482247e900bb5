//! One check per acceptance criterion. Each returns a short detail line on
//! success and a description of the first discrepancy on failure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::{json, Value};

use sorryforge::cli::dispatch;
use sorryforge::db::{parse_database, save_database, to_canonical_json, Database};
use sorryforge::harness::{compute_metrics, emit_report, intersection_counts, pass_at_k, select_test_slice, ReportFormat, RunRecord};
use sorryforge::harness::metrics::combined_count;
use sorryforge::indexer::scan::scan_for_sorries;
use sorryforge::indexer::deduplicate;
use sorryforge::lean::{ScriptEntry, ScriptedSession};
use sorryforge::model::{
    compute_id, normalize_goal, timestamp, validate_record, DatasetSnapshot, DebugInfo, ProofProposal, RecordMetadata,
    RepoCategory, RepoCoordinates, SorryRecord, SourceLocation, Span, VerdictStatus, VerificationVerdict,
};
use sorryforge::provers::{ApproachGroup, AttemptRecord, ProverInfo, TokenUsage};
use sorryforge::verifier::{verify_source, VerifierConfig};

use super::{fake_lean, repos};

pub type Check = Result<String, String>;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn ts(s: &str) -> DateTime<Utc> {
    timestamp::parse(s).expect("fixture timestamp")
}

pub fn record(remote: &str, path: &str, line: u32, column: u32, goal: &str, blame: DateTime<Utc>) -> SorryRecord {
    SorryRecord::new(
        RepoCoordinates {
            remote: remote.into(),
            branch: "main".into(),
            commit: "f".repeat(40),
            lean_version: "v4.24.0".into(),
        },
        SourceLocation::new(
            path,
            Span {
                start_line: line,
                start_column: column,
                end_line: line,
                end_column: column + 5,
            },
        ),
        DebugInfo {
            goal: goal.into(),
            url: format!("{remote}/blob/{}/{path}#L{line}", "f".repeat(40)),
        },
        RecordMetadata {
            blame_email_hash: "e".repeat(64),
            blame_date: blame,
            inclusion_date: ts("2026-01-15T00:00:00Z").max(blame),
        },
    )
    .expect("record fixture")
}

// ---------------------------------------------------------------- scanner

pub fn scanner_corpus() -> Check {
    let dir = fixtures().join("scan");
    let golden: BTreeMap<String, Vec<[u32; 4]>> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("golden.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(golden.len() == 20, || format!("golden lists {} files, expected 20", golden.len()))?;
    let mut total = 0;
    for (file, expected) in &golden {
        let src = std::fs::read_to_string(dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
        let got: Vec<[u32; 4]> = scan_for_sorries(&src)
            .iter()
            .map(|h| [h.span.start_line, h.span.start_column, h.span.end_line, h.span.end_column])
            .collect();
        ensure(&got == expected, || format!("{file}: got {got:?}, golden {expected:?}"))?;
        total += got.len();
    }
    Ok(format!("20 files, {total} hits, exact match"))
}

// ---------------------------------------------------------------- verifier

pub const VERIFY_SOURCE: &str = "theorem t1 : 1 + 1 = 2 := by\n  sorry\n\ntheorem t2 : True := by\n  sorry\n";
pub const TARGET_GOAL: &str = "⊢ 1 + 1 = 2";

pub fn verify_record() -> SorryRecord {
    record("https://example.org/v.git", "V.lean", 2, 2, TARGET_GOAL, ts("2025-01-01T00:00:00Z"))
}

fn sorry_json(line: u32, goal: &str, state: u64) -> Value {
    json!({"pos": {"line": line, "column": 2}, "endPos": {"line": line, "column": 7}, "goal": goal, "proofState": state})
}

fn warn(line: u32) -> Value {
    json!({"severity": "warning", "pos": {"line": line, "column": 8}, "data": "declaration uses 'sorry'"})
}

fn entry(expect: &str, response: Value) -> ScriptEntry {
    ScriptEntry {
        expect_substring: expect.into(),
        response: Some(response),
        ..Default::default()
    }
}

pub fn baseline_entry() -> ScriptEntry {
    entry(
        VERIFY_SOURCE,
        json!({"env": 0, "messages": [warn(1), warn(4)],
               "sorries": [sorry_json(2, TARGET_GOAL, 0), sorry_json(5, "⊢ True", 1)]}),
    )
}

pub fn axioms_entry(axioms: &str) -> ScriptEntry {
    entry(
        "#print axioms t1",
        json!({"env": 2, "messages": [{"severity": "info", "pos": {"line": 1, "column": 0},
               "data": format!("'t1' depends on axioms: [{axioms}]")}]}),
    )
}

pub struct Scenario {
    pub name: &'static str,
    pub proposal: &'static str,
    /// Spliced-file answer, then any further entries.
    pub after: Vec<ScriptEntry>,
    pub expected: VerdictStatus,
    /// Entries deliberately left unconsumed.
    pub leftover: usize,
}

pub const TYPE_ERROR: &str = "unknown identifier 'two_eq'";

pub fn scenarios() -> Vec<Scenario> {
    let error = json!({"severity": "error", "pos": {"line": 2, "column": 9}, "data": TYPE_ERROR});
    let t2 = sorry_json(5, "⊢ True", 3);
    vec![
        Scenario {
            name: "build error",
            proposal: "exact two_eq",
            after: vec![entry("exact two_eq", json!({"env": 1, "messages": [error, warn(4)], "sorries": [t2]}))],
            expected: VerdictStatus::BuildFailure,
            leftover: 0,
        },
        Scenario {
            name: "proposal sorry",
            proposal: "sorry",
            after: vec![entry(
                "theorem t1",
                json!({"env": 1, "messages": [warn(1), warn(4)], "sorries": [sorry_json(2, TARGET_GOAL, 2), t2]}),
            )],
            expected: VerdictStatus::SorryCountUnchanged,
            leftover: 0,
        },
        Scenario {
            name: "two sorries removed",
            proposal: "decide",
            after: vec![entry("decide", json!({"env": 1}))],
            expected: VerdictStatus::SorryCountOverDecreased,
            leftover: 0,
        },
        Scenario {
            name: "remaining goal changed",
            proposal: "rfl",
            after: vec![entry("rfl", json!({"env": 1, "messages": [warn(4)], "sorries": [sorry_json(5, "⊢ False", 3)]}))],
            expected: VerdictStatus::OtherGoalChanged,
            leftover: 0,
        },
        Scenario {
            name: "sorryAx in axioms",
            proposal: "exact t2_helper",
            after: vec![
                entry("exact t2_helper", json!({"env": 1, "messages": [warn(4)], "sorries": [t2]})),
                axioms_entry("propext, sorryAx"),
            ],
            expected: VerdictStatus::ForbiddenAxiom,
            leftover: 0,
        },
        Scenario {
            name: "clean success",
            proposal: "norm_num",
            after: vec![
                entry("norm_num", json!({"env": 1, "messages": [warn(4)], "sorries": [t2]})),
                axioms_entry("propext"),
            ],
            expected: VerdictStatus::Accepted,
            leftover: 0,
        },
        // Combined triggers: the highest-precedence status must win, and
        // lower checks must not even issue their requests.
        Scenario {
            name: "build error + count unchanged",
            proposal: "exact two_eq",
            after: vec![entry(
                "exact two_eq",
                json!({"env": 1, "messages": [error], "sorries": [sorry_json(2, TARGET_GOAL, 2), t2]}),
            )],
            expected: VerdictStatus::BuildFailure,
            leftover: 0,
        },
        Scenario {
            name: "count unchanged + goal changed",
            proposal: "sorry",
            after: vec![entry(
                "theorem t1",
                json!({"env": 1, "sorries": [sorry_json(2, TARGET_GOAL, 2), sorry_json(5, "⊢ False", 3)]}),
            )],
            expected: VerdictStatus::SorryCountUnchanged,
            leftover: 0,
        },
        Scenario {
            name: "over-decreased + sorryAx",
            proposal: "decide",
            after: vec![entry("decide", json!({"env": 1})), axioms_entry("sorryAx")],
            expected: VerdictStatus::SorryCountOverDecreased,
            leftover: 1,
        },
        Scenario {
            name: "goal changed + sorryAx",
            proposal: "rfl",
            after: vec![
                entry("rfl", json!({"env": 1, "sorries": [sorry_json(5, "⊢ False", 3)]})),
                axioms_entry("sorryAx"),
            ],
            expected: VerdictStatus::OtherGoalChanged,
            leftover: 1,
        },
    ]
}

pub fn run_scenario(s: &Scenario) -> Result<(VerificationVerdict, ScriptedSession), String> {
    let mut script = vec![baseline_entry()];
    script.extend(s.after.iter().cloned());
    let mut session = ScriptedSession::new(script);
    let record = verify_record();
    let proposal = ProofProposal {
        sorry_id: record.id.clone(),
        text: s.proposal.into(),
        origin: "scenario".into(),
        iteration: 0,
    };
    let verdict = verify_source(&mut session, VERIFY_SOURCE, &record, &proposal, &VerifierConfig::default())
        .map_err(|e| format!("{}: {e}", s.name))?;
    Ok((verdict, session))
}

pub fn verification_semantics() -> Check {
    let mut seen = BTreeSet::new();
    for s in scenarios() {
        let (verdict, session) = run_scenario(&s)?;
        ensure(verdict.status == s.expected, || {
            format!("{}: got {:?}, expected {:?} ({:?})", s.name, verdict.status, s.expected, verdict.messages)
        })?;
        ensure(session.remaining() == s.leftover, || {
            format!("{}: {} script entries unconsumed, expected {}", s.name, session.remaining(), s.leftover)
        })?;
        if s.expected == VerdictStatus::BuildFailure {
            ensure(verdict.messages.iter().any(|m| m == TYPE_ERROR), || {
                format!("{}: error text not preserved: {:?}", s.name, verdict.messages)
            })?;
        }
        seen.insert(s.expected);
    }
    let want: BTreeSet<_> = [
        VerdictStatus::BuildFailure,
        VerdictStatus::SorryCountUnchanged,
        VerdictStatus::SorryCountOverDecreased,
        VerdictStatus::OtherGoalChanged,
        VerdictStatus::ForbiddenAxiom,
        VerdictStatus::Accepted,
    ]
    .into();
    ensure(seen == want, || format!("statuses covered: {seen:?}"))?;
    Ok(format!("{} scenarios incl. 4 precedence combinations", scenarios().len()))
}

// ---------------------------------------------------------------- dedup

const GOALS: [&str; 6] = ["⊢ P", "⊢  P", "⊢ P\n", "⊢ Q", "h : P\n⊢ Q", "h : P ⊢ Q"];
const REMOTES: [&str; 3] = ["https://example.org/r1", "https://example.org/r2", "https://example.org/r3"];

fn arb_record() -> impl Strategy<Value = SorryRecord> {
    (0..REMOTES.len(), 0..GOALS.len(), 1u32..40, 0u32..6, 0i64..8, 0i64..3).prop_map(|(r, g, line, col, day, incl)| {
        let blame = ts("2025-01-01T00:00:00Z") + chrono::Duration::days(day);
        let mut rec = record(REMOTES[r], "A.lean", line, col, GOALS[g], blame);
        rec.metadata.inclusion_date = ts("2026-01-01T00:00:00Z") + chrono::Duration::days(incl);
        rec.id = compute_id(&rec).unwrap();
        rec
    })
}

fn dedup_case(input: Vec<SorryRecord>) -> Result<(), TestCaseError> {
    let out = deduplicate(&input);
    prop_assert_eq!(deduplicate(&out), out.clone(), "not idempotent");
    let mut groups: BTreeMap<(String, String), Vec<&SorryRecord>> = BTreeMap::new();
    for r in &input {
        groups
            .entry((r.repo.remote.clone(), normalize_goal(&r.debug_info.goal)))
            .or_default()
            .push(r);
    }
    let keys: Vec<_> = out
        .iter()
        .map(|r| (r.repo.remote.clone(), normalize_goal(&r.debug_info.goal)))
        .collect();
    let unique: BTreeSet<_> = keys.iter().cloned().collect();
    prop_assert_eq!(unique.len(), keys.len(), "duplicate keys in output");
    prop_assert_eq!(unique.len(), groups.len(), "a group vanished");
    for (key, survivor) in keys.iter().zip(&out) {
        let members = &groups[key];
        let max = members.iter().map(|r| r.metadata.blame_date).max().unwrap();
        prop_assert_eq!(survivor.metadata.blame_date, max);
        prop_assert!(members.contains(&survivor), "survivor not from its group");
    }
    Ok(())
}

pub fn dedup_properties(cases: u32) -> Check {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&prop::collection::vec(arb_record(), 0..40), dedup_case)
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random record sets"))
}

// ---------------------------------------------------------------- selection

fn selection_case((sizes, days, n): (Vec<usize>, Vec<i64>, usize)) -> Result<(), TestCaseError> {
    let mut records = Vec::new();
    let mut d = days.iter().cycle();
    for (repo, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let blame = ts("2025-01-01T00:00:00Z") + chrono::Duration::days(*d.next().unwrap());
            records.push(record(&format!("https://example.org/repo{repo}"), "A.lean", i as u32 + 1, 0, &format!("⊢ G{i}"), blame));
        }
    }
    let snapshot = DatasetSnapshot::new("s", ts("2026-06-01T00:00:00Z"), records.clone(), BTreeMap::new());
    let slice = select_test_slice(&snapshot, n);
    prop_assert_eq!(slice.records.len(), n.min(records.len()));
    prop_assert!(slice.check_invariants().is_empty());

    let mut by_repo: BTreeMap<&str, Vec<&SorryRecord>> = BTreeMap::new();
    for r in &records {
        by_repo.entry(r.repo.remote.as_str()).or_default().push(r);
    }
    let mut counts = Vec::new();
    for (remote, mut all) in by_repo {
        all.sort_by(|a, b| b.metadata.blame_date.cmp(&a.metadata.blame_date).then_with(|| a.id.cmp(&b.id)));
        let mut chosen: Vec<&SorryRecord> = slice.records.iter().filter(|r| r.repo.remote == remote).collect();
        let c = chosen.len();
        chosen.sort_by(|a, b| b.metadata.blame_date.cmp(&a.metadata.blame_date).then_with(|| a.id.cmp(&b.id)));
        prop_assert_eq!(chosen, all[..c].to_vec(), "not the newest prefix of {}", remote);
        counts.push((c, c < all.len()));
    }
    let open: Vec<usize> = counts.iter().filter(|(_, open)| *open).map(|(c, _)| *c).collect();
    if let (Some(lo), Some(hi)) = (open.iter().min(), open.iter().max()) {
        prop_assert!(hi - lo <= 1, "spread {} among non-exhausted repos", hi - lo);
    }
    Ok(())
}

pub fn abc_fixture() -> Result<(), String> {
    let db = parse_database(&std::fs::read_to_string(fixtures().join("db/abc.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let expected: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("db/abc_expected.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    for (key, n) in [("n4", 4), ("all", 100)] {
        let got: Vec<String> = select_test_slice(&db, n).records.into_iter().map(|r| r.id).collect();
        ensure(got == expected[key], || format!("n={n}: got {got:?}, expected {:?}", expected[key]))?;
    }
    Ok(())
}

pub fn selection_properties(cases: u32) -> Check {
    abc_fixture()?;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        prop::collection::vec(0usize..7, 1..6),
        prop::collection::vec(0i64..5, 1..10),
        1usize..30,
    );
    runner.run(&strategy, selection_case).map_err(|e| e.to_string())?;
    Ok(format!("A/B/C fixture plus {cases} random snapshots"))
}

// ---------------------------------------------------------------- metrics

fn brute_pass_at_k(outcomes: &[Vec<bool>], k: usize) -> f64 {
    let mut hits = 0usize;
    for task in outcomes {
        let mut any = false;
        for &outcome in &task[..k] {
            any |= outcome;
        }
        if any {
            hits += 1;
        }
    }
    if outcomes.is_empty() {
        0.0
    } else {
        hits as f64 / outcomes.len() as f64
    }
}

fn run(task: &str, prover: &str, solved: bool) -> RunRecord {
    RunRecord {
        sorry_id: task.into(),
        prover_id: prover.into(),
        attempts: vec![],
        solved,
        category: None,
        diagnostic: None,
    }
}

pub fn metric_properties() -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let matrix = (1usize..9).prop_flat_map(|m| prop::collection::vec(prop::collection::vec(any::<bool>(), m), 0..25));
    runner
        .run(&matrix, |outcomes| {
            let m = outcomes.first().map_or(1, Vec::len);
            let mut last = 0.0;
            for k in 1..=m {
                let got = pass_at_k(&outcomes, k).unwrap();
                prop_assert_eq!(got, brute_pass_at_k(&outcomes, k), "k = {}", k);
                prop_assert!(got >= last, "not monotone at k = {}", k);
                prop_assert!((0.0..=1.0).contains(&got));
                last = got;
            }
            Ok(())
        })
        .map_err(|e| format!("pass@k: {e}"))?;

    let provers = ["A", "B", "C", "D"];
    let runs = prop::collection::vec(prop::collection::vec(any::<bool>(), provers.len()), 0..30);
    runner
        .run(&runs, |table| {
            let mut runs = Vec::new();
            let mut union = BTreeSet::new();
            for (t, row) in table.iter().enumerate() {
                for (p, &solved) in row.iter().enumerate() {
                    runs.push(run(&format!("t{t}"), provers[p], solved));
                    if solved {
                        union.insert(t);
                    }
                }
            }
            let sum: usize = intersection_counts(&runs).values().sum();
            prop_assert_eq!(sum, union.len());
            prop_assert_eq!(combined_count(&runs), union.len());
            let m = compute_metrics(&runs, &[]);
            let best = m.provers.iter().map(|p| p.solved_count).max().unwrap_or(0);
            prop_assert!(m.combined_count >= best);
            Ok(())
        })
        .map_err(|e| format!("intersections: {e}"))?;
    Ok(())
}

/// Category sizes of a 1000-task slice, in task order.
const CATEGORY_SIZES: [(RepoCategory, usize); 5] = [
    (RepoCategory::Formalization, 562),
    (RepoCategory::Pedagogical, 216),
    (RepoCategory::Benchmark, 48),
    (RepoCategory::Library, 89),
    (RepoCategory::Tooling, 85),
];

fn category_of_task(i: usize) -> RepoCategory {
    let mut edge = 0;
    for (c, n) in CATEGORY_SIZES {
        edge += n;
        if i < edge {
            return c;
        }
    }
    unreachable!("task index beyond slice")
}

fn attempt(task: &str, origin: &str, iteration: u32, accepted: bool, tokens: u64) -> AttemptRecord {
    AttemptRecord {
        proposal: ProofProposal {
            sorry_id: task.into(),
            text: if accepted { "simp".into() } else { "omega".into() },
            origin: origin.into(),
            iteration,
        },
        verdict: VerificationVerdict::new(
            if accepted { VerdictStatus::Accepted } else { VerdictStatus::BuildFailure },
            vec![],
        ),
        tokens: TokenUsage {
            prompt: tokens,
            completion: tokens / 2,
        },
        wall_ms: 0,
        tool_rounds: 0,
    }
}

/// Four provers over 1000 tasks. The two deterministic ones solve 21 and
/// 84 tasks, i.e. 2.1% and 8.4%.
pub fn report_fixture() -> (Vec<RunRecord>, Vec<ProverInfo>) {
    let infos = vec![
        ProverInfo { id: "Trivial".into(), group: ApproachGroup::Deterministic, samples: None },
        ProverInfo { id: "Tactics".into(), group: ApproachGroup::Deterministic, samples: None },
        ProverInfo { id: "Sampler".into(), group: ApproachGroup::GeneralPurpose, samples: Some(4) },
        ProverInfo { id: "Agent".into(), group: ApproachGroup::Iterative, samples: None },
    ];
    let mut runs = Vec::new();
    for i in 0..1000 {
        let task = format!("task-{i:04}");
        let category = Some(category_of_task(i));
        let mk = |prover: &str, attempts: Vec<AttemptRecord>| RunRecord {
            sorry_id: task.clone(),
            prover_id: prover.into(),
            solved: attempts.iter().any(|a| a.verdict.is_accepted()),
            attempts,
            category,
            diagnostic: None,
        };
        runs.push(mk("Trivial", vec![attempt(&task, "Trivial", 0, i < 21, 0)]));
        runs.push(mk("Tactics", vec![attempt(&task, "Tactics", 0, i < 84, 0)]));
        // Solved on sample i % 4 whenever i % 7 == 3.
        let hit = (i % 7 == 3).then_some(i % 4);
        let samples = (0..4).map(|s| attempt(&task, "Sampler", s as u32, hit == Some(s), 1000 + i as u64)).collect();
        runs.push(mk("Sampler", samples));
        let agent = if i % 5 == 1 {
            (0..=(i % 3) as u32).map(|it| attempt(&task, "Agent", it, it == (i % 3) as u32, 4000 + 10 * i as u64)).collect()
        } else {
            vec![attempt(&task, "Agent", 0, false, 500)]
        };
        runs.push(mk("Agent", agent));
    }
    (runs, infos)
}

pub fn golden_report() -> Result<(), String> {
    let (runs, infos) = report_fixture();
    let metrics = compute_metrics(&runs, &infos);
    let md = emit_report(&metrics, ReportFormat::Markdown);
    let path = fixtures().join("report/table.md");
    if std::env::var_os("SORRYFORGE_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &md).unwrap();
    }
    let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure(md == golden, || format!("markdown report differs from {}", path.display()))?;
    for row in ["| Trivial | 2.1% | n/a |", "| Tactics | 8.4% | n/a |"] {
        ensure(md.contains(row), || format!("missing row {row}"))?;
    }
    let json = emit_report(&metrics, ReportFormat::Json);
    let back: sorryforge::harness::MetricsTable = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    ensure(back == metrics, || "json round-trip changed the table".into())?;
    Ok(())
}

pub fn metrics_checks() -> Check {
    metric_properties()?;
    golden_report()?;
    Ok("100 pass@k matrices, 100 intersection tables, golden report".into())
}

// ---------------------------------------------------------------- end to end

fn cli(args: &[&str]) -> Result<(), String> {
    let argv: Vec<&str> = std::iter::once("sorryforge").chain(args.iter().copied()).collect();
    match dispatch(argv) {
        0 => Ok(()),
        code => Err(format!("`sorryforge {}` exited with {code}", args.join(" "))),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub struct Pipeline {
    pub dir: tempfile::TempDir,
    pub report: String,
    pub slice: DatasetSnapshot,
    pub union: BTreeSet<String>,
    pub run_count: usize,
}

pub fn build_source_repos(src: &Path) -> (PathBuf, PathBuf) {
    let alpha = repos::make_repo(
        src,
        "alpha",
        &[
            repos::Commit {
                branch: "main",
                from: "main",
                date: "2025-03-01T10:00:00Z",
                email: "alice@example.org",
                files: &[(
                    "Alpha/Basic.lean",
                    "theorem a1 : P1 := by sorry\ntheorem a2 : P2 := by sorry\ndef d1 : Nat := sorry\ntheorem a3 : P3 := by sorry\n",
                )],
            },
            repos::Commit {
                branch: "main",
                from: "main",
                date: "2025-04-01T10:00:00Z",
                email: "bob@example.org",
                files: &[("Alpha/More.lean", "theorem a4 : P4 := by sorry\n")],
            },
            repos::Commit {
                branch: "feature",
                from: "main",
                date: "2025-05-01T10:00:00Z",
                email: "carol@example.org",
                files: &[("Alpha/Extra.lean", "theorem a5 : P5 := by sorry\n\nlemma a6 : P6 := by sorry\n")],
            },
        ],
    );
    let beta = repos::make_repo(
        src,
        "beta",
        &[repos::Commit {
            branch: "main",
            from: "main",
            date: "2025-02-01T10:00:00Z",
            email: "dana@example.org",
            files: &[(
                "Beta.lean",
                "theorem b1 : Q1 := by sorry\ntheorem b2 : Q2 := by sorry\ntheorem b3 : Q3 := by sorry\ntheorem b4 : Q4 := by sorry\n",
            )],
        }],
    );
    (alpha, beta)
}

pub fn end_to_end() -> Result<Pipeline, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let write = |name: &str, value: &Value| -> Result<PathBuf, String> {
        let p = root.join(name);
        std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).map_err(|e| e.to_string())?;
        Ok(p)
    };
    let (alpha, beta) = build_source_repos(&root.join("src"));
    let scripts = root.join("scripts");
    std::fs::create_dir_all(&scripts).unwrap();
    write("scripts/alpha.json", &serde_json::to_value(fake_lean::index_script(&alpha)).unwrap())?;
    write("scripts/beta.json", &serde_json::to_value(fake_lean::index_script(&beta)).unwrap())?;

    let registry = write(
        "registry.json",
        &json!([
            {"name": "alpha", "remote": path_str(&alpha), "license": "Apache-2.0", "last_update": "2025-05-01T10:00:00Z", "visibility": "public"},
            {"name": "beta", "remote": path_str(&beta), "license": "MIT", "last_update": "2025-04-20T00:00:00Z", "visibility": "public"},
            {"name": "gamma", "remote": "https://example.org/gamma", "license": "MIT", "last_update": "2025-05-01T00:00:00Z", "visibility": "private"},
            {"name": "delta", "remote": "https://example.org/delta", "last_update": "2025-05-01T00:00:00Z", "visibility": "public"}
        ]),
    )?;
    let p = |name: &str| root.join(name);
    let now = "2025-06-01T00:00:00Z";
    cli(&["registry", "ingest", "--input", path_str(&registry), "--out", path_str(&p("listings.json"))])?;
    cli(&[
        "registry", "filter", "--input", path_str(&p("listings.json")), "--window-days", "90", "--now", now, "--out",
        path_str(&p("eligible.json")),
    ])?;
    cli(&[
        "index", "--repos", path_str(&p("eligible.json")), "--db", path_str(&p("raw.json")), "--cache",
        path_str(&p("cache")), "--mock", path_str(&scripts), "--scripted-build", "--now", now, "--summary",
        path_str(&p("summary.json")), "--workers", "2",
    ])?;
    cli(&["dedup", "--db", path_str(&p("raw.json")), "--out", path_str(&p("db.json"))])?;
    cli(&["select", "--db", path_str(&p("db.json")), "--n", "10", "--out", path_str(&p("slice.json"))])?;

    write(
        "table.json",
        &json!({"accept": {"⊢ P1": ["trivial"], "⊢ P2": ["exact h2"], "⊢ Q1": ["exact hq1", "trivial"],
                           "⊢ P5": ["decide"], "⊢ Q3": ["simp"]}}),
    )?;
    let fence = |t: &str| format!("```lean\n{t}\n```");
    let mut sampler = vec![
        json!({"content": fence("exact h2"), "when": "⊢ P2", "completion_tokens": 40, "prompt_tokens": 900}),
        json!({"content": fence("exact hq1"), "when": "⊢ Q1", "completion_tokens": 35, "prompt_tokens": 880}),
    ];
    sampler.extend((0..8).map(|_| json!({"content": fence("linarith"), "completion_tokens": 20, "prompt_tokens": 900})));
    write("sampler.json", &Value::Array(sampler))?;
    let mut corrector = vec![
        json!({"content": fence("omega"), "completion_tokens": 12, "prompt_tokens": 700}),
        json!({"content": fence("decide"), "when": "⊢ P5", "completion_tokens": 10, "prompt_tokens": 1400}),
        json!({"content": fence("simp"), "when": "⊢ Q3", "completion_tokens": 10, "prompt_tokens": 1400}),
    ];
    corrector.extend((0..16).map(|_| json!({"content": fence("aesop"), "completion_tokens": 9, "prompt_tokens": 1500})));
    write("corrector.json", &Value::Array(corrector))?;
    let provers = write(
        "provers.json",
        &json!({"provers": [
            {"id": "tactics", "group": "Deterministic", "strategy": "tactic", "tactics": ["rfl", "trivial"]},
            {"id": "sampler", "group": "General-purpose", "strategy": "sample", "n": 4,
             "client": {"type": "scripted", "path": "sampler.json"}},
            {"id": "self-correct", "group": "Iterative", "strategy": "self_correct", "max_iter": 16,
             "client": {"type": "scripted", "path": "corrector.json"}}
        ]}),
    )?;
    cli(&[
        "run", "--slice", path_str(&p("slice.json")), "--provers", path_str(&provers), "--out", path_str(&p("run")),
        "--mock-verifier", path_str(&p("table.json")), "--cache", path_str(&p("cache")),
    ])?;
    cli(&[
        "report", "--runs", path_str(&p("run")), "--format", "markdown", "--out", path_str(&p("report.md")),
    ])?;

    // Union of solved tasks read straight from the logs.
    let mut union = BTreeSet::new();
    let mut run_count = 0;
    for entry in std::fs::read_dir(p("run/runs")).map_err(|e| e.to_string())? {
        let text = std::fs::read_to_string(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        for line in text.lines() {
            let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            run_count += 1;
            if v["solved"] == Value::Bool(true) {
                union.insert(v["sorry_id"].as_str().unwrap_or_default().to_string());
            }
        }
    }
    let slice = parse_database(&std::fs::read_to_string(p("slice.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let report = std::fs::read_to_string(p("report.md")).map_err(|e| e.to_string())?;
    Ok(Pipeline {
        dir,
        report,
        slice,
        union,
        run_count,
    })
}

/// The `(solved, total)` pair printed in the Combined row.
pub fn combined_row(report: &str) -> Option<(usize, usize)> {
    let row = report.lines().find(|l| l.starts_with("| **Combined** |"))?;
    let inner = row.split('(').nth(1)?.split(')').next()?;
    let (a, b) = inner.split_once('/')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

pub fn end_to_end_check() -> Check {
    let p = end_to_end()?;
    ensure(p.slice.records.len() == 10, || format!("slice has {} tasks, expected 10", p.slice.records.len()))?;
    ensure(p.run_count == 30, || format!("{} run records, expected 30", p.run_count))?;
    let (solved, total) = combined_row(&p.report).ok_or("report has no Combined row")?;
    ensure(total == 10, || format!("Combined row counts {total} tasks"))?;
    ensure(solved == p.union.len(), || format!("Combined row says {solved}, union of logs is {}", p.union.len()))?;
    ensure(solved == 5, || format!("expected 5 tasks solved overall, got {solved}"))?;
    Ok(format!("10 tasks x 3 provers, Combined {solved}/10 equals log union"))
}

// ---------------------------------------------------------------- live

pub const LIVE_ENV: &str = "SORRYFORGE_LIVE";

/// Needs `git`, `lake` with a Lean toolchain, and the `repl` executable.
pub fn live_smoke() -> Check {
    if std::env::var(LIVE_ENV).as_deref() != Ok("1") {
        return Err(format!("not run: requires {LIVE_ENV}=1, network access and a Lean toolchain with `lake` and `repl`"));
    }
    use sorryforge::indexer::{index_repositories, IndexContext, RealSessions};
    use sorryforge::lean::{open_session, Backend, Builder, RealReplConfig, WorkspaceCache};
    use sorryforge::provers::{ProverTask, tactic_prover};
    use sorryforge::registry::{RepoListing, Visibility};
    use sorryforge::verifier::{verify_proposal, ReplChecker};

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let toolchain = std::env::var("SORRYFORGE_LIVE_TOOLCHAIN").unwrap_or_else(|_| "leanprover/lean4:v4.24.0".into());
    let repo = repos::make_repo(
        dir.path(),
        "smoke",
        &[repos::Commit {
            branch: "main",
            from: "main",
            date: "2025-05-01T00:00:00Z",
            email: "smoke@example.org",
            files: &[
                ("lean-toolchain", &format!("{toolchain}\n")),
                ("lakefile.toml", "name = \"smoke\"\ndefaultTargets = [\"Smoke\"]\n\n[[lean_lib]]\nname = \"Smoke\"\n"),
                ("Smoke.lean", "theorem t : True := by sorry\n"),
            ],
        }],
    );
    let listing = RepoListing {
        name: "smoke".into(),
        remote: path_str(&repo).into(),
        license_id: "MIT".into(),
        last_update: ts("2025-05-01T00:00:00Z"),
        visibility: Visibility::Public,
        category: None,
    };
    let builder = Builder::lake();
    let sessions = RealSessions(RealReplConfig::default());
    let mut ctx = IndexContext::new(WorkspaceCache::new(dir.path().join("cache")), &builder, &sessions);
    ctx.request_timeout = Duration::from_secs(600);
    let batch = index_repositories(std::slice::from_ref(&listing), &ctx, 1);
    if let Some(e) = batch.summary.repos.iter().find_map(|r| r.error.clone()) {
        return Err(format!("indexing failed: {e}"));
    }
    ensure(batch.records.len() == 1, || format!("{} records, expected 1", batch.records.len()))?;
    let record = batch.records[0].clone();

    let cache = WorkspaceCache::new(dir.path().join("cache"));
    let ws = builder
        .build(cache.prepare(&record.repo.remote, &record.repo.branch, &record.repo.commit).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let text = ws.read_file(&record.location.path).map_err(|e| e.to_string())?;
    let session = open_session(&ws, &Backend::Real(RealReplConfig::default())).map_err(|e| e.to_string())?;
    let mut checker = ReplChecker { session, config: VerifierConfig::default() };
    let task = ProverTask::new(record.clone(), text);
    let run = tactic_prover(&task, &["trivial".to_string()], &mut checker, "live").map_err(|e| e.to_string())?;
    ensure(run.solved(), || format!("tactic prover did not solve: {:?}", run.attempts))?;

    let mut session = open_session(&ws, &Backend::Real(RealReplConfig::default())).map_err(|e| e.to_string())?;
    let config = VerifierConfig::default();
    for (text, want) in [("trivial", VerdictStatus::Accepted), ("sorry", VerdictStatus::SorryCountUnchanged)] {
        let proposal = ProofProposal { sorry_id: record.id.clone(), text: text.into(), origin: "live".into(), iteration: 0 };
        let v = verify_proposal(session.as_mut(), &ws, &record, &proposal, &config).map_err(|e| e.to_string())?;
        ensure(v.status == want, || format!("`{text}`: got {:?}, expected {want:?}", v.status))?;
    }
    session.close();
    Ok("indexed 1 record, solved by trivial, sorry rejected".into())
}

// ---------------------------------------------------------------- schema

pub fn schema_fidelity() -> Check {
    let path = fixtures().join("db/sample_records.json");
    let original = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let snapshot = parse_database(&original).map_err(|e| e.to_string())?;
    ensure(snapshot.records.len() == 3, || format!("{} records", snapshot.records.len()))?;
    for r in &snapshot.records {
        let problems = validate_record(r);
        ensure(problems.is_empty(), || format!("{}: {problems:?}", r.location.path))?;
        ensure(compute_id(r).as_deref() == Ok(r.id.as_str()), || format!("{}: id mismatch", r.location.path))?;
    }
    let expectations: HashMap<&str, (u32, &str, &str)> = [
        ("Game/Levels/L25Levels/L02.lean", (128, "case refine_1\n", "⊢ a < c")),
        (
            "Curve25519Dalek/Specs/Backend/Serial/U64/Field/FieldElement51/Mul.lean",
            (44, "lhs rhs : Array U64 5#usize\n", "∀ i < 5, ↑r[i]! < 2 ^ 52"),
        ),
        (
            "FLT/DivisionAlgebra/Finiteness.lean",
            (106, "K : Type u_1\n", "φ e₁ - φ e₂ ∈ Set.range ↑Algebra.TensorProduct.includeLeft"),
        ),
    ]
    .into();
    for r in &snapshot.records {
        let (line, head, tail) = expectations
            .get(r.location.path.as_str())
            .ok_or_else(|| format!("unexpected path {}", r.location.path))?;
        ensure(r.location.start_line == *line, || format!("{}: line {}", r.location.path, r.location.start_line))?;
        ensure(r.debug_info.goal.starts_with(head) && r.debug_info.goal.ends_with(tail), || {
            format!("{}: goal does not match the printed block", r.location.path)
        })?;
    }
    ensure(to_canonical_json(&snapshot) == original, || "canonical text differs from the fixture bytes".into())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("copy.json");
    save_database(&Database { path: out.clone(), snapshot }).map_err(|e| e.to_string())?;
    let saved = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    ensure(saved == original, || "save/load changed the bytes".into())?;
    Ok("3 published example records validate and round-trip byte-identically".into())
}
