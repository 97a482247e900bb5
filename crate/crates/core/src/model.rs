//! Canonical data model shared by every pipeline stage.
//!
//! A [`SorryRecord`] is one open proof obligation. Its `id` is a SHA-256
//! digest over a restricted canonical serialization (see [`canonical_bytes`])
//! so that re-indexing a repository with recomputed blame data or a renamed
//! branch yields the same identifier.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

/// Errors raised while building model values.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("missing canonical field `{0}`")]
    MissingField(&'static str),
}

/// RFC 3339 UTC timestamps with seconds precision (`2025-06-01T12:00:00Z`).
pub mod timestamp {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        let parsed = DateTime::parse_from_rfc3339(s)?.with_timezone(&Utc);
        Ok(truncate(parsed))
    }

    /// Drops sub-second precision.
    pub fn truncate(ts: DateTime<Utc>) -> DateTime<Utc> {
        DateTime::from_timestamp(ts.timestamp(), 0).expect("in-range timestamp")
    }

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Where a repository lives and which toolchain it builds with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepoCoordinates {
    pub remote: String,
    pub branch: String,
    pub commit: String,
    pub lean_version: String,
}

/// A region of source text. Lines are 1-based, columns 0-based code-point
/// offsets, and the end column is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub start_column: u32,
    pub end_line: u32,
    pub end_column: u32,
}

impl Span {
    pub fn start(&self) -> (u32, u32) {
        (self.start_line, self.start_column)
    }

    pub fn end(&self) -> (u32, u32) {
        (self.end_line, self.end_column)
    }

    pub fn is_well_formed(&self) -> bool {
        self.start_line >= 1 && self.start() < self.end()
    }
}

/// File-qualified [`Span`], the `location` block of a record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceLocation {
    pub path: String,
    pub start_line: u32,
    pub start_column: u32,
    pub end_line: u32,
    pub end_column: u32,
}

impl SourceLocation {
    pub fn new(path: impl Into<String>, span: Span) -> Self {
        SourceLocation {
            path: path.into(),
            start_line: span.start_line,
            start_column: span.start_column,
            end_line: span.end_line,
            end_column: span.end_column,
        }
    }

    pub fn span(&self) -> Span {
        Span {
            start_line: self.start_line,
            start_column: self.start_column,
            end_line: self.end_line,
            end_column: self.end_column,
        }
    }
}

/// The goal the proof assistant reports at a sorry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalState {
    pub pretty: String,
    pub is_prop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebugInfo {
    pub goal: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub blame_email_hash: String,
    #[serde(with = "timestamp")]
    pub blame_date: DateTime<Utc>,
    #[serde(with = "timestamp")]
    pub inclusion_date: DateTime<Utc>,
}

/// One open proof obligation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SorryRecord {
    pub repo: RepoCoordinates,
    pub location: SourceLocation,
    pub debug_info: DebugInfo,
    pub metadata: RecordMetadata,
    pub id: String,
}

impl SorryRecord {
    /// Builds a record and stamps its content-addressed id.
    pub fn new(
        repo: RepoCoordinates,
        location: SourceLocation,
        debug_info: DebugInfo,
        metadata: RecordMetadata,
    ) -> Result<Self, ModelError> {
        let mut record = SorryRecord {
            repo,
            location,
            debug_info,
            metadata,
            id: String::new(),
        };
        record.id = compute_id(&record)?;
        Ok(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RepoCategory {
    Pedagogical,
    Tooling,
    Benchmark,
    Library,
    Formalization,
}

impl RepoCategory {
    pub const ALL: [RepoCategory; 5] = [
        RepoCategory::Pedagogical,
        RepoCategory::Tooling,
        RepoCategory::Benchmark,
        RepoCategory::Library,
        RepoCategory::Formalization,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RepoCategory::Pedagogical => "Pedagogical",
            RepoCategory::Tooling => "Tooling",
            RepoCategory::Benchmark => "Benchmark",
            RepoCategory::Library => "Library",
            RepoCategory::Formalization => "Formalization",
        }
    }
}

impl fmt::Display for RepoCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RepoCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RepoCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown repository category `{s}`"))
    }
}

/// Candidate replacement text for one sorry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofProposal {
    pub sorry_id: String,
    pub text: String,
    pub origin: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictStatus {
    Accepted,
    BuildFailure,
    SorryCountUnchanged,
    SorryCountOverDecreased,
    OtherGoalChanged,
    ForbiddenAxiom,
    Timeout,
    EnvironmentError,
}

impl fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Outcome of splicing a proposal in and re-elaborating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub status: VerdictStatus,
    pub messages: Vec<String>,
    pub elapsed_ms: u64,
}

impl VerificationVerdict {
    pub fn new(status: VerdictStatus, messages: Vec<String>) -> Self {
        VerificationVerdict {
            status,
            messages,
            elapsed_ms: 0,
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == VerdictStatus::Accepted
    }
}

/// Per-repository and per-category record counts of a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub repos: BTreeMap<String, usize>,
    /// Keyed by category name; records of uncategorized remotes land in
    /// `Unassigned` so the counts always sum to the record total.
    pub categories: BTreeMap<String, usize>,
}

pub const UNASSIGNED: &str = "Unassigned";

/// An ordered, deduplicated collection of records frozen at a cutoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSnapshot {
    pub name: String,
    #[serde(with = "timestamp")]
    pub cutoff: DateTime<Utc>,
    pub records: Vec<SorryRecord>,
    /// Category of each remote, carried alongside the records.
    pub categories: BTreeMap<String, RepoCategory>,
    pub manifest: SnapshotManifest,
}

impl DatasetSnapshot {
    pub fn new(
        name: impl Into<String>,
        cutoff: DateTime<Utc>,
        records: Vec<SorryRecord>,
        categories: BTreeMap<String, RepoCategory>,
    ) -> Self {
        let manifest = build_manifest(&records, &categories);
        DatasetSnapshot {
            name: name.into(),
            cutoff,
            records,
            categories,
            manifest,
        }
    }

    pub fn category_of(&self, remote: &str) -> Option<RepoCategory> {
        self.categories.get(remote).copied()
    }

    /// Returns human-readable invariant violations; empty when consistent.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                out.push(format!("records[{i}]: duplicate id {}", r.id));
            }
            if r.metadata.inclusion_date > self.cutoff {
                out.push(format!("records[{i}]: inclusion_date after cutoff"));
            }
        }
        let repo_total: usize = self.manifest.repos.values().sum();
        let cat_total: usize = self.manifest.categories.values().sum();
        if repo_total != self.records.len() || cat_total != self.records.len() {
            out.push("manifest: counts do not sum to record total".to_string());
        }
        out
    }
}

pub fn build_manifest(
    records: &[SorryRecord],
    categories: &BTreeMap<String, RepoCategory>,
) -> SnapshotManifest {
    let mut manifest = SnapshotManifest::default();
    for r in records {
        *manifest.repos.entry(r.repo.remote.clone()).or_default() += 1;
        let cat = categories
            .get(&r.repo.remote)
            .map(|c| c.as_str())
            .unwrap_or(UNASSIGNED);
        *manifest.categories.entry(cat.to_string()).or_default() += 1;
    }
    manifest
}

/// The byte string hashed into a record id: compact JSON with sorted keys
/// over `repo.{remote,commit}`, `location.{path,start_line,start_column}`
/// and `debug_info.goal`.
pub fn canonical_bytes(record: &SorryRecord) -> Result<Vec<u8>, ModelError> {
    let required = [
        ("repo.remote", &record.repo.remote),
        ("repo.commit", &record.repo.commit),
        ("location.path", &record.location.path),
        ("debug_info.goal", &record.debug_info.goal),
    ];
    for (name, value) in required {
        if value.is_empty() {
            return Err(ModelError::MissingField(name));
        }
    }
    if record.location.start_line == 0 {
        return Err(ModelError::MissingField("location.start_line"));
    }
    // serde_json's default map is ordered, so keys serialize sorted.
    let value = json!({
        "debug_info": { "goal": record.debug_info.goal },
        "location": {
            "path": record.location.path,
            "start_column": record.location.start_column,
            "start_line": record.location.start_line,
        },
        "repo": {
            "commit": record.repo.commit,
            "remote": record.repo.remote,
        },
    });
    Ok(serde_json::to_vec(&value).expect("json values always serialize"))
}

/// Lowercase hex SHA-256 of [`canonical_bytes`]. The stored `id` is ignored.
pub fn compute_id(record: &SorryRecord) -> Result<String, ModelError> {
    Ok(sha256_hex(&canonical_bytes(record)?))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the lowercased, trimmed author email.
pub fn hash_email(email: &str) -> String {
    sha256_hex(email.trim().to_lowercase().as_bytes())
}

/// NFC-normalizes, collapses whitespace runs to one space, and trims.
pub fn normalize_goal(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split([' ', '\t', '\n', '\r'])
        .filter(|part| !part.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn is_lower_hex(s: &str, len: usize) -> bool {
    s.len() == len && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn check_hex(field: &str, value: &str, len: usize, out: &mut Vec<String>) {
    if value.len() != len {
        out.push(format!("{field}: wrong length"));
    } else if !is_lower_hex(value, len) {
        out.push(format!("{field}: not lowercase hex"));
    }
}

/// Lists every invariant a record breaks; empty means valid.
pub fn validate_record(record: &SorryRecord) -> Vec<String> {
    let mut out = Vec::new();
    let repo = &record.repo;
    if repo.remote.is_empty() {
        out.push("remote: empty".to_string());
    }
    if repo.branch.is_empty() {
        out.push("branch: empty".to_string());
    }
    check_hex("commit", &repo.commit, 40, &mut out);
    if repo.lean_version.is_empty() {
        out.push("lean_version: empty".to_string());
    }

    let loc = &record.location;
    if loc.start_line < 1 {
        out.push("location: start_line must be >= 1".to_string());
    }
    if loc.span().start() >= loc.span().end() {
        out.push("location: start does not precede end".to_string());
    }
    if loc.path.is_empty() {
        out.push("location.path: empty".to_string());
    }
    if loc.path.starts_with('/') {
        out.push("location.path: leading slash".to_string());
    }
    if loc.path.split('/').any(|seg| seg == "..") {
        out.push("location.path: parent segment".to_string());
    }

    if record.debug_info.goal.is_empty() {
        out.push("debug_info.goal: empty".to_string());
    }
    if record.debug_info.url.is_empty() {
        out.push("debug_info.url: empty".to_string());
    }

    let meta = &record.metadata;
    check_hex("blame_email_hash", &meta.blame_email_hash, 64, &mut out);
    if meta.blame_date > meta.inclusion_date {
        out.push("metadata: blame_date after inclusion_date".to_string());
    }

    match compute_id(record) {
        Ok(expected) if expected == record.id => {}
        Ok(_) => out.push("id: digest mismatch".to_string()),
        Err(e) => out.push(format!("id: {e}")),
    }
    out
}

/// Parses a serialized record value and reports schema-level problems
/// (missing fields) the same way [`validate_record`] reports invariants.
pub fn record_from_value(value: Value) -> Result<SorryRecord, String> {
    serde_json::from_value(value).map_err(|e| e.to_string())
}
