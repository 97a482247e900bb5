//! Command-line entry point. Exit codes: 0 success, 1 operational error,
//! 2 usage error. Diagnostics go to stderr; data goes to files or stdout.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::db::{load_database, save_database, to_canonical_json, Database};
use crate::harness::{
    compute_metrics, emit_report, read_logs, run_evaluation, select_test_slice, ReportFormat, RunOptions,
    VerifierBackend, WorkspaceEnvironment,
};
use crate::indexer::{deduplicate, index_repositories, IndexContext, MockSessions, RealSessions, SessionProvider};
use crate::lean::{open_session, Backend, Builder, RealReplConfig, ScriptedSession, WorkspaceCache};
use crate::model::{timestamp, DatasetSnapshot, ProofProposal, SorryRecord};
use crate::provers::{Prover, ProverConfig, ProverInfo, ProverSpec};
use crate::registry::{
    categorize, filter_eligible, ingest_registry, ActivityPolicy, CategoryRules, LicenseAllowList, RepoListing,
};
use crate::verifier::{verify_source, ReplChecker, TableChecker, VerdictRecord, VerifierConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sorryforge", version, about = "Index, verify and benchmark Lean sorry obligations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read and filter package-registry documents.
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Mine sorries from every leaf commit of the listed repositories.
    Index(IndexArgs),
    /// Collapse records with the same repository and goal.
    Dedup(DedupArgs),
    /// Pick an evaluation slice, cycling through repositories.
    Select(SelectArgs),
    /// Check one proposal against one record.
    Verify(VerifyArgs),
    /// Run provers over a slice, resuming from earlier results.
    Run(RunArgs),
    /// Summarize run logs.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum RegistryCommand {
    /// Parse a registry document and assign categories.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Category rules (JSON list of {pattern, category}).
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep public, licensed, recently active listings.
    Filter {
        #[arg(long)]
        input: PathBuf,
        /// Require an update on or after this time.
        #[arg(long, conflicts_with = "window_days")]
        since: Option<String>,
        /// Require an update within this many days of `--now` (default 90).
        #[arg(long)]
        window_days: Option<u32>,
        /// SPDX allow-list (JSON list of identifiers).
        #[arg(long)]
        licenses: Option<PathBuf>,
        /// Reference time; defaults to the current time.
        #[arg(long)]
        now: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// Listing document as written by `registry ingest`/`filter`.
    #[arg(long)]
    repos: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value = "sorries")]
    name: String,
    /// Workspace cache; `SORRYFORGE_CACHE_DIR` wins when set.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Directory of scripted REPL sessions, one `<repo name>.json` each.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Treat every build as successful instead of running `lake build`.
    #[arg(long)]
    scripted_build: bool,
    #[arg(long, default_value_t = crate::indexer::DEFAULT_WORKERS)]
    workers: usize,
    /// Per-repository outcome summary (JSON).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Stamp records with this inclusion time instead of now.
    #[arg(long)]
    now: Option<String>,
}

#[derive(Debug, Args)]
struct DedupArgs {
    #[arg(long)]
    db: PathBuf,
    /// Write here instead of rewriting `--db` in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Name of the slice; defaults to the database name.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    db: PathBuf,
    /// Record id, or an unambiguous prefix of one.
    #[arg(long)]
    id: String,
    /// File holding the replacement text.
    #[arg(long)]
    proposal: PathBuf,
    /// Project checkout to read the file from, instead of the cache.
    #[arg(long)]
    workspace: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Scripted REPL session file instead of a live REPL.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long, default_value_t = crate::verifier::DEFAULT_VERIFY_TIMEOUT.as_secs())]
    timeout: u64,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Slice database as written by `select`.
    #[arg(long)]
    slice: PathBuf,
    /// Prover configuration (JSON).
    #[arg(long)]
    provers: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Judge proposals with an acceptance table instead of a live REPL.
    #[arg(long)]
    mock_verifier: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Stop after this many newly executed pairs.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directory (holding `runs/`) or the `runs/` directory itself.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, default_value = "markdown", value_parser = parse_format)]
    format: ReportFormat,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

/// Written next to `runs/` by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub slice_name: String,
    pub slice_path: PathBuf,
    pub tasks: usize,
    pub provers: Vec<ProverSpec>,
    pub infos: Vec<ProverInfo>,
    /// Sampling happens provider-side, so there is no local seed to record.
    pub seed: Option<u64>,
    #[serde(with = "timestamp")]
    pub started: chrono::DateTime<Utc>,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Registry(c) => registry(c),
        Command::Index(a) => index(a),
        Command::Dedup(a) => dedup(a),
        Command::Select(a) => select(a),
        Command::Verify(a) => verify(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure(message)) => {
            eprintln!("error: {message}");
            EXIT_FAILURE
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn parse_time(s: Option<&str>) -> Result<chrono::DateTime<Utc>, Failure> {
    match s {
        Some(s) => timestamp::parse(s).map_err(|e| Failure(format!("bad timestamp `{s}`: {e}"))),
        None => Ok(timestamp::truncate(Utc::now())),
    }
}

fn cache_dir(arg: Option<PathBuf>) -> WorkspaceCache {
    let default = arg.unwrap_or_else(|| std::env::temp_dir().join("sorryforge-cache"));
    WorkspaceCache::from_env_or(default)
}

fn registry(cmd: RegistryCommand) -> Outcome {
    match cmd {
        RegistryCommand::Ingest { input, rules, out } => {
            let mut outcome = ingest_registry(&read(&input)?)?;
            let rules = match rules {
                Some(p) => CategoryRules::load(&p)?,
                None => CategoryRules::default(),
            };
            categorize(&mut outcome.listings, &rules);
            eprintln!("ingested {} listings, dropped {}", outcome.listings.len(), outcome.dropped);
            write_or_print(out.as_deref(), &json_text(&outcome.listings))?;
        }
        RegistryCommand::Filter {
            input,
            since,
            window_days,
            licenses,
            now,
            out,
        } => {
            let listings = ingest_registry(&read(&input)?)?.listings;
            let policy = match (since, window_days) {
                (Some(s), _) => ActivityPolicy::SinceDate(parse_time(Some(&s))?),
                (None, Some(days)) => ActivityPolicy::within_window(days)?,
                (None, None) => ActivityPolicy::default(),
            };
            let licenses = match licenses {
                Some(p) => LicenseAllowList::from_json(&read(&p)?)?,
                None => LicenseAllowList::default(),
            };
            let kept = filter_eligible(&listings, &policy, &licenses, parse_time(now.as_deref())?);
            eprintln!("kept {} of {} listings", kept.len(), listings.len());
            write_or_print(out.as_deref(), &json_text(&kept))?;
        }
    }
    Ok(EXIT_OK)
}

fn index(a: IndexArgs) -> Outcome {
    let listings: Vec<RepoListing> = ingest_registry(&read(&a.repos)?)?.listings;
    let builder = if a.scripted_build { Builder::scripted_success() } else { Builder::lake() };
    let sessions: Box<dyn SessionProvider> = match &a.mock {
        Some(dir) => Box::new(MockSessions::from_dir(dir)),
        None => Box::new(RealSessions(RealReplConfig::default())),
    };
    let mut ctx = IndexContext::new(cache_dir(a.cache), &builder, sessions.as_ref());
    ctx.inclusion_date = parse_time(a.now.as_deref())?;
    let batch = index_repositories(&listings, &ctx, a.workers);

    let cutoff = batch
        .records
        .iter()
        .map(|r| r.metadata.inclusion_date)
        .chain([ctx.inclusion_date])
        .max()
        .expect("nonempty chain");
    let failed = batch.summary.repos.iter().filter(|r| r.error.is_some()).count();
    for r in batch.summary.repos.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: {}: {}", r.name, r.error.as_deref().unwrap_or_default());
    }
    let db = Database {
        path: a.db,
        snapshot: DatasetSnapshot::new(a.name, cutoff, batch.records, batch.categories),
    };
    save_database(&db)?;
    if let Some(p) = &a.summary {
        write_or_print(Some(p), &json_text(&batch.summary))?;
    }
    eprintln!(
        "indexed {} repositories ({failed} failed), {} records written to {}",
        listings.len(),
        db.snapshot.records.len(),
        db.path.display()
    );
    Ok(EXIT_OK)
}

fn dedup(a: DedupArgs) -> Outcome {
    let db = load_database(&a.db)?;
    let s = &db.snapshot;
    let records = deduplicate(&s.records);
    eprintln!("kept {} of {} records", records.len(), s.records.len());
    save_database(&Database {
        path: a.out.unwrap_or(db.path.clone()),
        snapshot: DatasetSnapshot::new(s.name.clone(), s.cutoff, records, s.categories.clone()),
    })?;
    Ok(EXIT_OK)
}

fn select(a: SelectArgs) -> Outcome {
    let db = load_database(&a.db)?;
    let mut slice = select_test_slice(&db.snapshot, a.n as usize);
    if let Some(name) = a.name {
        slice.name = name;
    }
    if (slice.records.len() as u64) < a.n {
        eprintln!("warning: only {} records available, fewer than {}", slice.records.len(), a.n);
    }
    match a.out {
        Some(path) => save_database(&Database { path, snapshot: slice })?,
        None => print!("{}", to_canonical_json(&slice)),
    }
    Ok(EXIT_OK)
}

fn find_record<'a>(snapshot: &'a DatasetSnapshot, id: &str) -> Result<&'a SorryRecord, Failure> {
    let matches: Vec<_> = snapshot.records.iter().filter(|r| r.id.starts_with(id)).collect();
    match matches.as_slice() {
        [r] => Ok(r),
        [] => Err(Failure(format!("no record with id {id}"))),
        _ => Err(Failure(format!("id prefix {id} matches {} records", matches.len()))),
    }
}

fn verify(a: VerifyArgs) -> Outcome {
    let db = load_database(&a.db)?;
    let record = find_record(&db.snapshot, &a.id)?;
    let text = read(&a.proposal)?;
    let proposal = ProofProposal {
        sorry_id: record.id.clone(),
        text: text.trim_end_matches('\n').to_string(),
        origin: "cli".into(),
        iteration: 0,
    };
    let config = VerifierConfig {
        timeout: Duration::from_secs(a.timeout),
        ..VerifierConfig::default()
    };
    let r = &record.repo;
    let (source, ws) = match &a.workspace {
        Some(dir) => (read(&dir.join(&record.location.path))?, None),
        None => {
            let ws = cache_dir(a.cache).prepare(&r.remote, &r.branch, &r.commit)?;
            (ws.read_file(&record.location.path)?, Some(ws))
        }
    };
    let verdict = match (&a.mock, ws) {
        (Some(script), _) => {
            let mut session = ScriptedSession::from_file(script)?;
            verify_source(&mut session, &source, record, &proposal, &config)?
        }
        (None, Some(ws)) => {
            let ws = Builder::lake().build(ws)?;
            let session = open_session(&ws, &Backend::Real(RealReplConfig::default()))?;
            let mut checker = ReplChecker { session, config };
            crate::verifier::ProposalChecker::verify(&mut checker, record, &source, &proposal)?
        }
        (None, None) => return Err(Failure("--workspace needs --mock; live checks use the cache".into())),
    };
    print!("{}", json_text(&VerdictRecord::new(&proposal, &verdict)));
    eprintln!("verdict: {}", verdict.status);
    Ok(if verdict.is_accepted() { EXIT_OK } else { EXIT_FAILURE })
}

fn run(a: RunArgs) -> Outcome {
    let slice = load_database(&a.slice)?.snapshot;
    let config = ProverConfig::load(&a.provers)?;
    let provers = config
        .provers
        .iter()
        .cloned()
        .map(Prover::from_spec)
        .collect::<Result<Vec<_>, _>>()?;
    let backend = match &a.mock_verifier {
        Some(p) => VerifierBackend::Table(TableChecker::from_json(&read(p)?)?),
        None => VerifierBackend::Repl {
            repl: RealReplConfig::default(),
            config: VerifierConfig::default(),
        },
    };
    let builder = match backend {
        VerifierBackend::Table(_) => Builder::scripted_success(),
        VerifierBackend::Repl { .. } => Builder::lake(),
    };
    let env = WorkspaceEnvironment {
        cache: cache_dir(a.cache),
        builder,
        backend,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Failure(format!("{}: {e}", a.out.display())))?;
    let manifest = RunManifest {
        slice_name: slice.name.clone(),
        slice_path: a.slice.clone(),
        tasks: slice.records.len(),
        provers: config.provers.clone(),
        infos: provers.iter().map(Prover::info).collect(),
        seed: None,
        started: timestamp::truncate(Utc::now()),
    };
    write_or_print(Some(&a.out.join("manifest.json")), &json_text(&manifest))?;
    let options = RunOptions {
        workers: a.workers,
        limit: a.limit,
    };
    let runs = run_evaluation(&slice, &provers, &env, options, &a.out.join("runs"))?;
    let solved = runs.iter().filter(|r| r.solved).count();
    eprintln!("{} runs recorded, {solved} solved", runs.len());
    Ok(EXIT_OK)
}

fn report(a: ReportArgs) -> Outcome {
    let (runs_dir, manifest_path) = if a.runs.join("runs").is_dir() {
        (a.runs.join("runs"), a.runs.join("manifest.json"))
    } else {
        let parent = a.runs.parent().map(Path::to_path_buf).unwrap_or_default();
        (a.runs.clone(), parent.join("manifest.json"))
    };
    let infos = if manifest_path.is_file() {
        serde_json::from_str::<RunManifest>(&read(&manifest_path)?)?.infos
    } else {
        vec![]
    };
    let runs = read_logs(&runs_dir)?;
    let metrics = compute_metrics(&runs, &infos);
    write_or_print(a.out.as_deref(), &emit_report(&metrics, a.format))?;
    Ok(EXIT_OK)
}
