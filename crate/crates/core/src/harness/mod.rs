//! Evaluation: slice selection, resumable prover runs, metrics and reports.

pub mod metrics;
pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::lean::{open_session, Backend, BuildState, Builder, RealReplConfig, WorkspaceCache};
use crate::model::{DatasetSnapshot, RepoCategory, SorryRecord};
use crate::provers::{AttemptRecord, Prover, ProverTask};
use crate::verifier::{ProposalChecker, ReplChecker, TableChecker, VerifierConfig};

pub use metrics::{
    category_breakdown, compute_metrics, intersection_counts, pass_at_k, MetricsError, MetricsTable,
};
pub use report::{emit_report, ReportFormat};

/// Round-robin over repositories in ascending remote order, taking each
/// repository's newest remaining record (by blame date, ties by id) per
/// turn until `n` records are chosen or all repositories are exhausted.
pub fn select_test_slice(snapshot: &DatasetSnapshot, n: usize) -> DatasetSnapshot {
    let mut by_repo: BTreeMap<&str, Vec<&SorryRecord>> = BTreeMap::new();
    for r in &snapshot.records {
        by_repo.entry(r.repo.remote.as_str()).or_default().push(r);
    }
    for records in by_repo.values_mut() {
        records.sort_by(|a, b| {
            b.metadata
                .blame_date
                .cmp(&a.metadata.blame_date)
                .then_with(|| a.id.cmp(&b.id))
        });
    }
    let queues: Vec<Vec<&SorryRecord>> = by_repo.into_values().collect();
    let mut chosen = Vec::new();
    let mut round = 0;
    while chosen.len() < n {
        let mut took = false;
        for q in &queues {
            if chosen.len() == n {
                break;
            }
            if let Some(r) = q.get(round) {
                chosen.push((*r).clone());
                took = true;
            }
        }
        if !took {
            break;
        }
        round += 1;
    }
    let remotes: BTreeSet<&str> = chosen.iter().map(|r| r.repo.remote.as_str()).collect();
    let categories = snapshot
        .categories
        .iter()
        .filter(|(k, _)| remotes.contains(k.as_str()))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    DatasetSnapshot::new(snapshot.name.clone(), snapshot.cutoff, chosen, categories)
}

/// Outcome of one prover on one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sorry_id: String,
    pub prover_id: String,
    pub attempts: Vec<AttemptRecord>,
    pub solved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<RepoCategory>,
    /// Why the pair failed or what went wrong along the way.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Supplies, per task, the file text and a verifier. Called once per
/// (task, prover) pair so a broken workspace only affects its own pairs.
pub trait TaskEnvironment: Sync {
    fn open(&self, record: &SorryRecord) -> Result<(String, Box<dyn ProposalChecker>), String>;
}

/// In-memory file texts keyed by record id, judged by a [`TableChecker`].
#[derive(Debug, Clone, Default)]
pub struct StaticEnvironment {
    pub files: BTreeMap<String, String>,
    pub checker: TableChecker,
}

impl TaskEnvironment for StaticEnvironment {
    fn open(&self, record: &SorryRecord) -> Result<(String, Box<dyn ProposalChecker>), String> {
        let text = self
            .files
            .get(&record.id)
            .ok_or_else(|| format!("no workspace for record {}", record.id))?;
        Ok((text.clone(), Box::new(self.checker.clone())))
    }
}

pub enum VerifierBackend {
    /// Accepts listed proofs per goal; no toolchain needed.
    Table(TableChecker),
    /// Builds the workspace and verifies through a REPL process.
    Repl { repl: RealReplConfig, config: VerifierConfig },
}

/// Checks out each record's commit from the workspace cache.
pub struct WorkspaceEnvironment {
    pub cache: WorkspaceCache,
    pub builder: Builder,
    pub backend: VerifierBackend,
}

impl TaskEnvironment for WorkspaceEnvironment {
    fn open(&self, record: &SorryRecord) -> Result<(String, Box<dyn ProposalChecker>), String> {
        let r = &record.repo;
        let ws = self
            .cache
            .prepare(&r.remote, &r.branch, &r.commit)
            .map_err(|e| e.to_string())?;
        let text = ws.read_file(&record.location.path).map_err(|e| format!("{}: {e}", record.location.path))?;
        let checker: Box<dyn ProposalChecker> = match &self.backend {
            VerifierBackend::Table(t) => Box::new(t.clone()),
            VerifierBackend::Repl { repl, config } => {
                let ws = self.builder.build(ws).map_err(|e| e.to_string())?;
                if let BuildState::Failed(messages) = &ws.build_state {
                    return Err(format!("build failed: {}", messages.join("; ")));
                }
                let session = open_session(&ws, &Backend::Real(repl.clone())).map_err(|e| e.to_string())?;
                Box::new(ReplChecker {
                    session,
                    config: config.clone(),
                })
            }
        };
        Ok((text, checker))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Stop after this many newly executed pairs; models an interrupted run.
    pub limit: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 4, limit: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: unreadable run record: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// File-name-safe form of a prover id.
pub fn log_name(prover_id: &str) -> String {
    let safe: String = prover_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.ndjson")
}

/// Reads a results log. A trailing line without a newline is an
/// interrupted write; it is cut off so the next append starts clean.
pub fn read_log(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    if complete < text.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(complete as u64).map_err(io_err(path))?;
    }
    text[..complete]
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::CorruptLog {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads every `*.ndjson` log in `dir`, sorted by file name.
pub fn read_logs(dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_log(&p)?);
    }
    Ok(out)
}

fn execute(record: &SorryRecord, prover: &Prover, env: &dyn TaskEnvironment, category: Option<RepoCategory>) -> RunRecord {
    let mut out = RunRecord {
        sorry_id: record.id.clone(),
        prover_id: prover.id().to_string(),
        attempts: vec![],
        solved: false,
        category,
        diagnostic: None,
    };
    let result = std::panic::catch_unwind(AssertUnwindSafe(|| {
        let (text, mut checker) = env.open(record).map_err(|e| format!("environment: {e}"))?;
        let task = ProverTask::new(record.clone(), text);
        prover.run(&task, checker.as_mut()).map_err(|e| e.to_string())
    }));
    match result {
        Ok(Ok(run)) => {
            out.solved = run.solved();
            if !run.client_errors.is_empty() {
                out.diagnostic = Some(run.client_errors.join("; "));
            }
            out.attempts = run.attempts;
        }
        Ok(Err(e)) => out.diagnostic = Some(e),
        Err(_) => out.diagnostic = Some("prover panicked".into()),
    }
    out
}

/// Runs every (task, prover) pair not already in `log_dir`, appending each
/// result to `log_dir/<prover>.ndjson` as it completes. Returns the results
/// for the whole slice in task-major, prover-minor order.
pub fn run_evaluation(
    slice: &DatasetSnapshot,
    provers: &[Prover],
    env: &dyn TaskEnvironment,
    options: RunOptions,
    log_dir: &Path,
) -> Result<Vec<RunRecord>, HarnessError> {
    std::fs::create_dir_all(log_dir).map_err(io_err(log_dir))?;
    let mut done: BTreeMap<(String, String), RunRecord> = BTreeMap::new();
    for p in provers {
        for r in read_log(&log_dir.join(log_name(p.id())))? {
            done.insert((r.sorry_id.clone(), r.prover_id.clone()), r);
        }
    }

    let pending: Vec<(usize, usize)> = slice
        .records
        .iter()
        .enumerate()
        .flat_map(|(t, r)| {
            let done = &done;
            provers
                .iter()
                .enumerate()
                .filter(move |(_, p)| !done.contains_key(&(r.id.clone(), p.id().to_string())))
                .map(move |(pi, _)| (t, pi))
        })
        .collect();
    let budget = options.limit.unwrap_or(usize::MAX).min(pending.len());

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let mut files: BTreeMap<String, File> = BTreeMap::new();
    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..options.workers.clamp(1, budget.max(1)) {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= budget {
                    break;
                }
                let (t, pi) = pending[i];
                let record = &slice.records[t];
                let result = execute(record, &provers[pi], env, slice.category_of(&record.repo.remote));
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: the only thread touching the logs.
        for result in rx {
            if write_error.is_none() {
                let path = log_dir.join(log_name(&result.prover_id));
                let appended = (|| -> Result<(), HarnessError> {
                    if !files.contains_key(&result.prover_id) {
                        let f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
                        files.insert(result.prover_id.clone(), f);
                    }
                    let f = files.get_mut(&result.prover_id).expect("just inserted");
                    let mut line = serde_json::to_string(&result).expect("run record serializes");
                    line.push('\n');
                    f.write_all(line.as_bytes()).map_err(io_err(&path))?;
                    f.flush().map_err(io_err(&path))
                })();
                write_error = appended.err();
            }
            done.insert((result.sorry_id.clone(), result.prover_id.clone()), result);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let wanted: HashSet<&str> = provers.iter().map(|p| p.id()).collect();
    let mut out = Vec::new();
    for r in &slice.records {
        for p in provers {
            if let Some(run) = done.remove(&(r.id.clone(), p.id().to_string())) {
                out.push(run);
            }
        }
    }
    debug_assert!(out.iter().all(|r| wanted.contains(r.prover_id.as_str())));
    Ok(out)
}
