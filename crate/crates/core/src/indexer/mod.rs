//! Finds `sorry` obligations in repository branch tips and turns the
//! prop-valued ones into [`SorryRecord`]s.
//!
//! Per repository: discover branch heads, prepare and build each one, scan
//! every `.lean` file lexically, confirm each hit against the REPL's own
//! sorry report, probe whether the goal is a proposition, blame the line,
//! and finally deduplicate by `(remote, normalized goal)`.

pub mod scan;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::git;
use crate::lean::{
    open_session, Backend, BuildState, Builder, RealReplConfig, ReplRequest, ReplResponse, ReplSession,
    ScriptEntry, ScriptedSession, SessionError, Workspace, WorkspaceCache, WorkspaceError,
    DEFAULT_REQUEST_TIMEOUT,
};
use crate::model::{
    hash_email, normalize_goal, timestamp, DebugInfo, GoalState, ModelError, RecordMetadata, RepoCategory,
    SorryRecord, SourceLocation,
};
use crate::registry::RepoListing;

pub use scan::{scan_for_sorries, ScanHit};

/// Tactic whose success on a sorry's proof state shows the goal is a `Prop`:
/// `Classical.byContradiction` only unifies with propositions.
pub const PROP_PROBE_TACTIC: &str = "apply Classical.byContradiction";

pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("git query failed: {0}")]
    GitQueryFailed(String),
    #[error("no REPL sorry at {line}:{column}")]
    NoMatchingSorry { line: u32, column: u32 },
    #[error("elaboration failed: {}", .0.join("; "))]
    ElaborationFailed(Vec<String>),
    #[error("git blame failed: {0}")]
    BlameFailed(String),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Tip of one remote branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafCommit {
    pub branch: String,
    pub commit: String,
    #[serde(with = "timestamp")]
    pub committed_at: DateTime<Utc>,
}

/// One entry per `refs/remotes/origin/*` head of the clone at `repo`,
/// ordered by branch name.
pub fn enumerate_leaf_commits(repo: &Path) -> Result<Vec<LeafCommit>, IndexError> {
    let out = git::run(
        Some(repo),
        &[
            "for-each-ref",
            "--format=%(refname)%09%(objectname)%09%(committerdate:iso-strict)",
            "refs/remotes/origin",
        ],
    )
    .map_err(|e| IndexError::GitQueryFailed(e.to_string()))?;
    let mut leaves = Vec::new();
    for line in out.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split('\t');
        let (Some(refname), Some(commit), Some(date)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(IndexError::GitQueryFailed(format!("unexpected ref line {line:?}")));
        };
        let branch = refname.trim_start_matches("refs/remotes/origin/");
        if branch == "HEAD" {
            continue;
        }
        let committed_at = DateTime::parse_from_rfc3339(date)
            .map_err(|e| IndexError::GitQueryFailed(format!("bad date {date:?}: {e}")))?
            .with_timezone(&Utc);
        leaves.push(LeafCommit {
            branch: branch.to_string(),
            commit: commit.to_string(),
            committed_at: timestamp::truncate(committed_at),
        });
    }
    leaves.sort_by(|a, b| a.branch.cmp(&b.branch));
    Ok(leaves)
}

/// Repo-relative paths of `.lean` files under `root`, skipping hidden
/// directories such as `.git` and `.lake`. Sorted, `/`-separated.
pub fn lean_files(root: &Path) -> Result<Vec<String>, IndexError> {
    let mut files = Vec::new();
    let walker = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| IndexError::Io {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|x| x == "lean") {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
            files.push(parts.join("/"));
        }
    }
    files.sort();
    Ok(files)
}

/// Elaborates `source` and fails if the REPL reports any error.
pub fn elaborate(
    session: &mut dyn ReplSession,
    source: &str,
    timeout: Duration,
) -> Result<ReplResponse, IndexError> {
    let response = session.check(&ReplRequest::cmd(source), timeout)?;
    if response.has_errors() {
        return Err(IndexError::ElaborationFailed(response.error_texts()));
    }
    Ok(response)
}

/// Matches `hit` to the elaborated sorry with the same start position and
/// probes whether its goal is a proposition.
pub fn goal_for_hit(
    session: &mut dyn ReplSession,
    elaborated: &ReplResponse,
    hit: &ScanHit,
    timeout: Duration,
) -> Result<GoalState, IndexError> {
    let (line, column) = hit.span.start();
    let sorry = elaborated
        .sorries
        .iter()
        .find(|s| s.pos.line == line && s.pos.column == column)
        .ok_or(IndexError::NoMatchingSorry { line, column })?;
    // Without a proof state nothing can be probed; such goals are not
    // treated as propositions.
    let is_prop = match sorry.proof_state {
        Some(ps) => {
            let probe = session.check(&ReplRequest::tactic(PROP_PROBE_TACTIC, ps), timeout)?;
            probe.error.is_none() && !probe.has_errors()
        }
        None => false,
    };
    Ok(GoalState {
        pretty: sorry.goal.clone(),
        is_prop,
    })
}

/// Elaborates `file` in `workspace` and returns the goal at `hit`.
pub fn extract_goal(
    session: &mut dyn ReplSession,
    workspace: &Workspace,
    hit: &ScanHit,
    file: &str,
    timeout: Duration,
) -> Result<GoalState, IndexError> {
    let source = workspace.read_file(file).map_err(|source| IndexError::Io {
        path: workspace.root.join(file),
        source,
    })?;
    let elaborated = elaborate(session, &source, timeout)?;
    goal_for_hit(session, &elaborated, hit, timeout)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blame {
    pub email_hash: String,
    pub date: DateTime<Utc>,
}

/// Blames the start line of `location` at the workspace's commit.
pub fn blame_metadata(workspace: &Workspace, location: &SourceLocation) -> Result<Blame, IndexError> {
    let range = format!("{0},{0}", location.start_line);
    let out = git::run(
        Some(&workspace.root),
        &[
            "blame",
            "--porcelain",
            "-L",
            &range,
            &workspace.coords.commit,
            "--",
            &location.path,
        ],
    )
    .map_err(|e| IndexError::BlameFailed(e.to_string()))?;
    parse_blame(&out)
}

fn parse_blame(porcelain: &str) -> Result<Blame, IndexError> {
    let mut email = None;
    let mut time = None;
    for line in porcelain.lines() {
        if let Some(v) = line.strip_prefix("author-mail ") {
            email = Some(v.trim().trim_start_matches('<').trim_end_matches('>').to_string());
        } else if let Some(v) = line.strip_prefix("author-time ") {
            time = v.trim().parse::<i64>().ok();
        }
    }
    let (Some(email), Some(secs)) = (email, time) else {
        return Err(IndexError::BlameFailed("porcelain output lacks author fields".into()));
    };
    let date = Utc
        .timestamp_opt(secs, 0)
        .single()
        .ok_or_else(|| IndexError::BlameFailed(format!("author-time {secs} out of range")))?;
    Ok(Blame {
        email_hash: hash_email(&email),
        date,
    })
}

/// Keeps, for each `(remote, normalized goal)`, the record with the latest
/// blame date, then latest inclusion date, then smallest id. Output is
/// ordered by remote, then blame date descending, then id.
pub fn deduplicate(records: &[SorryRecord]) -> Vec<SorryRecord> {
    let mut best: HashMap<(String, String), &SorryRecord> = HashMap::new();
    for r in records {
        let key = (r.repo.remote.clone(), normalize_goal(&r.debug_info.goal));
        match best.get(&key) {
            Some(cur) if !supersedes(r, cur) => {}
            _ => {
                best.insert(key, r);
            }
        }
    }
    let mut out: Vec<SorryRecord> = best.into_values().cloned().collect();
    out.sort_by(|a, b| {
        a.repo
            .remote
            .cmp(&b.repo.remote)
            .then(b.metadata.blame_date.cmp(&a.metadata.blame_date))
            .then(a.id.cmp(&b.id))
    });
    out
}

fn supersedes(a: &SorryRecord, b: &SorryRecord) -> bool {
    (a.metadata.blame_date, a.metadata.inclusion_date, std::cmp::Reverse(&a.id))
        > (b.metadata.blame_date, b.metadata.inclusion_date, std::cmp::Reverse(&b.id))
}

/// Drop counts per stage. `build_failure` counts branches,
/// `elaboration_failure` counts files, the rest count sorry hits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub build_failure: usize,
    pub elaboration_failure: usize,
    pub non_prop: usize,
    pub no_match: usize,
    pub duplicate: usize,
}

impl IndexStats {
    pub fn add(&mut self, other: &IndexStats) {
        self.build_failure += other.build_failure;
        self.elaboration_failure += other.elaboration_failure;
        self.non_prop += other.non_prop;
        self.no_match += other.no_match;
        self.duplicate += other.duplicate;
    }
}

/// Opens a REPL session for a prepared, built workspace.
pub trait SessionProvider: Sync {
    fn open(&self, listing: &RepoListing, workspace: &Workspace) -> Result<Box<dyn ReplSession>, SessionError>;
}

/// One REPL process per workspace.
#[derive(Debug, Clone, Default)]
pub struct RealSessions(pub RealReplConfig);

impl SessionProvider for RealSessions {
    fn open(&self, _listing: &RepoListing, workspace: &Workspace) -> Result<Box<dyn ReplSession>, SessionError> {
        open_session(workspace, &Backend::Real(self.0.clone()))
    }
}

/// One script per repository, shared by all of its branches so a single
/// script file covers a whole repository run in order.
#[derive(Debug, Default)]
pub struct MockSessions {
    dir: Option<PathBuf>,
    preset: HashMap<String, Vec<ScriptEntry>>,
    live: Mutex<HashMap<String, Arc<Mutex<ScriptedSession>>>>,
}

impl MockSessions {
    /// Scripts are read from `<dir>/<listing name>.json`.
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        MockSessions {
            dir: Some(dir.into()),
            ..Default::default()
        }
    }

    /// Scripts keyed by listing name.
    pub fn from_scripts(scripts: HashMap<String, Vec<ScriptEntry>>) -> Self {
        MockSessions {
            preset: scripts,
            ..Default::default()
        }
    }

    fn load(&self, name: &str) -> Result<ScriptedSession, SessionError> {
        if let Some(entries) = self.preset.get(name) {
            return Ok(ScriptedSession::new(entries.clone()));
        }
        match &self.dir {
            Some(dir) => ScriptedSession::from_file(&dir.join(format!("{name}.json"))),
            None => Err(SessionError::SpawnFailed(format!("no mock script for {name}"))),
        }
    }
}

impl SessionProvider for MockSessions {
    fn open(&self, listing: &RepoListing, _workspace: &Workspace) -> Result<Box<dyn ReplSession>, SessionError> {
        let mut live = self.live.lock().expect("mock registry lock");
        let shared = match live.get(&listing.name) {
            Some(s) => s.clone(),
            None => {
                let s = Arc::new(Mutex::new(self.load(&listing.name)?));
                live.insert(listing.name.clone(), s.clone());
                s
            }
        };
        Ok(Box::new(SharedSession(shared)))
    }
}

/// Handle onto a script cursor that outlives any single handle.
struct SharedSession(Arc<Mutex<ScriptedSession>>);

impl ReplSession for SharedSession {
    fn check(&mut self, request: &ReplRequest, timeout: Duration) -> Result<ReplResponse, SessionError> {
        self.0.lock().expect("mock session lock").check(request, timeout)
    }

    /// The underlying cursor stays open for the repository's next branch.
    fn close(&mut self) {}

    fn requests_served(&self) -> usize {
        self.0.lock().expect("mock session lock").requests_served()
    }
}

pub struct IndexContext<'a> {
    pub cache: WorkspaceCache,
    pub builder: &'a Builder,
    pub sessions: &'a dyn SessionProvider,
    /// Stamped on every record of the batch.
    pub inclusion_date: DateTime<Utc>,
    pub request_timeout: Duration,
}

impl<'a> IndexContext<'a> {
    pub fn new(cache: WorkspaceCache, builder: &'a Builder, sessions: &'a dyn SessionProvider) -> Self {
        IndexContext {
            cache,
            builder,
            sessions,
            inclusion_date: timestamp::truncate(Utc::now()),
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
        }
    }
}

/// `<remote without .git>/blob/<commit>/<path>#L<line>`.
pub fn source_url(remote: &str, commit: &str, location: &SourceLocation) -> String {
    let base = remote.trim_end_matches('/');
    let base = base.strip_suffix(".git").unwrap_or(base);
    format!("{base}/blob/{commit}/{}#L{}", location.path, location.start_line)
}

#[derive(Debug, Clone, Default)]
pub struct RepoIndex {
    pub records: Vec<SorryRecord>,
    pub stats: IndexStats,
}

/// Indexes every branch tip of one repository.
pub fn index_repository(listing: &RepoListing, ctx: &IndexContext<'_>) -> Result<RepoIndex, IndexError> {
    let heads = ctx.cache.discovery_clone(&listing.remote)?;
    let leaves = enumerate_leaf_commits(&heads)?;
    let mut stats = IndexStats::default();
    let mut found = Vec::new();
    for leaf in &leaves {
        let ws = ctx.cache.prepare(&listing.remote, &leaf.branch, &leaf.commit)?;
        let ws = ctx.builder.build(ws)?;
        if let BuildState::Failed(messages) = &ws.build_state {
            tracing::warn!(remote = %listing.remote, branch = %leaf.branch, "build failed: {}", messages.join("; "));
            stats.build_failure += 1;
            continue;
        }
        let mut session = ctx.sessions.open(listing, &ws)?;
        let result = index_workspace(session.as_mut(), &ws, ctx, &mut stats, &mut found);
        session.close();
        result?;
    }
    let records = deduplicate(&found);
    stats.duplicate += found.len() - records.len();
    Ok(RepoIndex { records, stats })
}

fn index_workspace(
    session: &mut dyn ReplSession,
    ws: &Workspace,
    ctx: &IndexContext<'_>,
    stats: &mut IndexStats,
    out: &mut Vec<SorryRecord>,
) -> Result<(), IndexError> {
    for file in lean_files(&ws.root)? {
        let source = ws.read_file(&file).map_err(|source| IndexError::Io {
            path: ws.root.join(&file),
            source,
        })?;
        let hits = scan_for_sorries(&source);
        if hits.is_empty() {
            continue;
        }
        let elaborated = match elaborate(session, &source, ctx.request_timeout) {
            Ok(r) => r,
            Err(IndexError::ElaborationFailed(_)) | Err(IndexError::Session(SessionError::Timeout(_))) => {
                stats.elaboration_failure += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for hit in &hits {
            let goal = match goal_for_hit(session, &elaborated, hit, ctx.request_timeout) {
                Ok(g) => g,
                Err(IndexError::NoMatchingSorry { .. }) => {
                    stats.no_match += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if !goal.is_prop {
                stats.non_prop += 1;
                continue;
            }
            let location = hit.location(&file);
            let blame = blame_metadata(ws, &location)?;
            let record = SorryRecord::new(
                ws.coords.clone(),
                location.clone(),
                DebugInfo {
                    goal: goal.pretty,
                    url: source_url(&ws.coords.remote, &ws.coords.commit, &location),
                },
                RecordMetadata {
                    blame_email_hash: blame.email_hash,
                    blame_date: blame.date,
                    // Clamped so a committer clock ahead of ours cannot
                    // produce blame_date > inclusion_date.
                    inclusion_date: ctx.inclusion_date.max(blame.date),
                },
            )?;
            out.push(record);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoOutcome {
    pub name: String,
    pub remote: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<IndexStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run summary emitted next to the database.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub repos: Vec<RepoOutcome>,
    pub totals: IndexStats,
}

#[derive(Debug, Clone, Default)]
pub struct BatchIndex {
    pub records: Vec<SorryRecord>,
    pub categories: BTreeMap<String, RepoCategory>,
    pub summary: IndexSummary,
}

/// Indexes `listings` on up to `workers` threads. A failing repository is
/// reported in the summary and never aborts the batch.
pub fn index_repositories(listings: &[RepoListing], ctx: &IndexContext<'_>, workers: usize) -> BatchIndex {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RepoIndex, IndexError>>>> =
        Mutex::new((0..listings.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, listings.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(listing) = listings.get(i) else { break };
                let result = index_repository(listing, ctx);
                results.lock().expect("results lock")[i] = Some(result);
            });
        }
    });

    let mut batch = BatchIndex::default();
    let mut all = Vec::new();
    for (listing, result) in listings.iter().zip(results.into_inner().expect("results lock")) {
        if let Some(category) = listing.category {
            batch.categories.insert(listing.remote.clone(), category);
        }
        let outcome = match result.expect("every listing is processed") {
            Ok(index) => {
                batch.summary.totals.add(&index.stats);
                all.extend(index.records);
                RepoOutcome {
                    name: listing.name.clone(),
                    remote: listing.remote.clone(),
                    stats: Some(index.stats),
                    error: None,
                }
            }
            Err(e) => RepoOutcome {
                name: listing.name.clone(),
                remote: listing.remote.clone(),
                stats: None,
                error: Some(e.to_string()),
            },
        };
        batch.summary.repos.push(outcome);
    }
    batch.records = deduplicate(&all);
    batch
}
