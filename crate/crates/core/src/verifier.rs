//! Splice-and-check verification of a proposed fill for one `sorry`.
//!
//! A proposal is accepted only when, in order of precedence:
//! the spliced file elaborates without errors, exactly one sorry disappears,
//! the remaining goals equal the baseline goals minus the target (as a
//! multiset of normalized texts), and the enclosing declaration depends on no
//! forbidden axiom.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::lean::{ReplRequest, ReplResponse, ReplSession, SessionError, Severity, Workspace};
use crate::model::{
    normalize_goal, ProofProposal, SorryRecord, SourceLocation, Span, VerdictStatus, VerificationVerdict,
};

pub const DEFAULT_VERIFY_TIMEOUT: Duration = Duration::from_secs(300);
const SORRY: &str = "sorry";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpliceResult {
    pub text: String,
    /// Where the proposal text sits in `text`.
    pub replaced_span: SourceLocation,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("location {path}:{line}:{column} does not hold `sorry` (found {found:?})")]
    SpanMismatch {
        path: String,
        line: u32,
        column: u32,
        found: String,
    },
    #[error("verification environment failure: {0}")]
    Environment(String),
}

impl From<SessionError> for VerifyError {
    fn from(e: SessionError) -> Self {
        VerifyError::Environment(e.to_string())
    }
}

/// Replaces the `sorry` at `location` with `proposal`. Continuation lines of
/// the proposal are indented by the sorry's start column; blank lines stay
/// empty and trailing newlines are dropped. Bytes outside the span are kept.
pub fn splice_proposal(source: &str, location: &SourceLocation, proposal: &str) -> Result<SpliceResult, VerifyError> {
    let mismatch = |found: String| VerifyError::SpanMismatch {
        path: location.path.clone(),
        line: location.start_line,
        column: location.start_column,
        found,
    };
    let line_start = nth_line_offset(source, location.start_line).ok_or_else(|| mismatch(String::new()))?;
    let line_text = source[line_start..].split('\n').next().unwrap_or("");
    let col = location.start_column as usize;
    let start = line_start + byte_offset(line_text, col).ok_or_else(|| mismatch(String::new()))?;
    let found: String = source[start..].chars().take(SORRY.chars().count()).collect();
    let single_line_sorry = location.start_line == location.end_line
        && location.end_column == location.start_column + SORRY.len() as u32;
    if found != SORRY || !single_line_sorry {
        return Err(mismatch(found));
    }
    let end = start + SORRY.len();

    let indent = " ".repeat(col);
    let body = proposal.trim_end_matches(['\n', '\r']);
    let mut replacement = String::new();
    for (i, l) in body.split('\n').enumerate() {
        if i > 0 {
            replacement.push('\n');
            if !l.trim().is_empty() {
                replacement.push_str(&indent);
            }
        }
        if i == 0 || !l.trim().is_empty() {
            replacement.push_str(l);
        }
    }

    let last = replacement.rsplit('\n').next().unwrap_or("");
    let lines = replacement.matches('\n').count() as u32;
    let end_column = if lines == 0 {
        location.start_column + last.chars().count() as u32
    } else {
        last.chars().count() as u32
    };
    let mut text = String::with_capacity(source.len() + replacement.len());
    text.push_str(&source[..start]);
    text.push_str(&replacement);
    text.push_str(&source[end..]);
    Ok(SpliceResult {
        text,
        replaced_span: SourceLocation::new(
            location.path.clone(),
            Span {
                start_line: location.start_line,
                start_column: location.start_column,
                end_line: location.start_line + lines,
                end_column,
            },
        ),
    })
}

fn nth_line_offset(source: &str, line: u32) -> Option<usize> {
    if line == 0 {
        return None;
    }
    let mut offset = 0;
    for _ in 1..line {
        offset += source[offset..].find('\n')? + 1;
    }
    Some(offset)
}

fn byte_offset(line: &str, column: usize) -> Option<usize> {
    line.char_indices().map(|(i, _)| i).chain([line.len()]).nth(column)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Axioms that reject a proof when the target declaration depends on
    /// them. `sorryAx` is tolerated only while other sorries remain inside
    /// the same declaration.
    pub forbidden_axioms: Vec<String>,
    #[serde(rename = "timeout_s", with = "seconds")]
    pub timeout: Duration,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            forbidden_axioms: vec!["sorryAx".into()],
            timeout: DEFAULT_VERIFY_TIMEOUT,
        }
    }
}

mod seconds {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs(u64::deserialize(d)?))
    }
}

/// Reads the record's file from `workspace` and verifies `proposal` in it.
pub fn verify_proposal(
    session: &mut dyn ReplSession,
    workspace: &Workspace,
    record: &SorryRecord,
    proposal: &ProofProposal,
    config: &VerifierConfig,
) -> Result<VerificationVerdict, VerifyError> {
    let source = workspace
        .read_file(&record.location.path)
        .map_err(|e| VerifyError::Environment(format!("{}: {e}", record.location.path)))?;
    verify_source(session, &source, record, proposal, config)
}

/// Verifies `proposal` against the unmodified file text `source`. Source is
/// sent to the REPL inline, so nothing is written to the workspace.
pub fn verify_source(
    session: &mut dyn ReplSession,
    source: &str,
    record: &SorryRecord,
    proposal: &ProofProposal,
    config: &VerifierConfig,
) -> Result<VerificationVerdict, VerifyError> {
    let started = Instant::now();
    let deadline = started + config.timeout;
    let mut verdict = match check_steps(session, source, record, proposal, config, deadline) {
        Ok(v) => v,
        Err(Step::Timeout) => VerificationVerdict::new(
            VerdictStatus::Timeout,
            vec![format!("verification exceeded {}s", config.timeout.as_secs())],
        ),
        Err(Step::Failed(e)) => return Err(e),
    };
    verdict.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(verdict)
}

enum Step {
    Timeout,
    Failed(VerifyError),
}

impl From<VerifyError> for Step {
    fn from(e: VerifyError) -> Self {
        Step::Failed(e)
    }
}

fn ask(session: &mut dyn ReplSession, request: &ReplRequest, deadline: Instant) -> Result<ReplResponse, Step> {
    let left = deadline.saturating_duration_since(Instant::now());
    if left.is_zero() {
        return Err(Step::Timeout);
    }
    match session.check(request, left) {
        Ok(r) => Ok(r),
        Err(SessionError::Timeout(_)) => Err(Step::Timeout),
        Err(e) => Err(Step::Failed(e.into())),
    }
}

fn check_steps(
    session: &mut dyn ReplSession,
    source: &str,
    record: &SorryRecord,
    proposal: &ProofProposal,
    config: &VerifierConfig,
    deadline: Instant,
) -> Result<VerificationVerdict, Step> {
    let loc = &record.location;
    let spliced = splice_proposal(source, loc, &proposal.text)?;

    let baseline = ask(session, &ReplRequest::cmd(source), deadline)?;
    if baseline.has_errors() {
        return Err(VerifyError::Environment(format!(
            "unmodified file does not elaborate: {}",
            baseline.error_texts().join("; ")
        ))
        .into());
    }
    let target = baseline
        .sorries
        .iter()
        .find(|s| s.pos.line == loc.start_line && s.pos.column == loc.start_column)
        .ok_or_else(|| {
            VerifyError::Environment(format!(
                "no sorry reported at {}:{}:{} in the unmodified file",
                loc.path, loc.start_line, loc.start_column
            ))
        })?;

    let after = ask(session, &ReplRequest::cmd(&spliced.text), deadline)?;
    if after.has_errors() {
        return Ok(VerificationVerdict::new(VerdictStatus::BuildFailure, after.error_texts()));
    }

    let before_n = baseline.sorries.len();
    let after_n = after.sorries.len();
    if after_n + 1 != before_n {
        let status = if after_n >= before_n {
            VerdictStatus::SorryCountUnchanged
        } else {
            VerdictStatus::SorryCountOverDecreased
        };
        return Ok(VerificationVerdict::new(
            status,
            vec![format!("sorry count went from {before_n} to {after_n}; expected {}", before_n - 1)],
        ));
    }

    let mut expected = goal_multiset(baseline.sorries.iter().map(|s| s.goal.as_str()));
    let target_goal = normalize_goal(&target.goal);
    if let Some(n) = expected.get_mut(&target_goal) {
        *n -= 1;
        if *n == 0 {
            expected.remove(&target_goal);
        }
    }
    let actual = goal_multiset(after.sorries.iter().map(|s| s.goal.as_str()));
    if expected != actual {
        return Ok(VerificationVerdict::new(
            VerdictStatus::OtherGoalChanged,
            vec!["remaining sorry goals differ from the unmodified file".into()],
        ));
    }

    if let Some(decl) = enclosing_declaration(&spliced.text, loc.start_line) {
        let mut request = ReplRequest::cmd(format!("#print axioms {}", decl.name));
        if let Some(env) = after.env {
            request = request.in_env(env);
        }
        let response = ask(session, &request, deadline)?;
        let others_in_decl = after.sorries.iter().any(|s| decl.contains_line(s.pos.line));
        let axioms = reported_axioms(&response);
        let offending: Vec<&String> = axioms
            .iter()
            .filter(|a| config.forbidden_axioms.contains(a))
            .filter(|a| !(a.as_str() == "sorryAx" && others_in_decl))
            .collect();
        if !offending.is_empty() {
            return Ok(VerificationVerdict::new(
                VerdictStatus::ForbiddenAxiom,
                offending
                    .iter()
                    .map(|a| format!("{} depends on forbidden axiom {a}", decl.name))
                    .collect(),
            ));
        }
    }

    let notes = after
        .messages
        .iter()
        .filter(|m| m.severity != Severity::Error && m.pos.line >= loc.start_line && m.pos.line <= spliced.replaced_span.end_line)
        .map(|m| m.data.clone())
        .collect();
    Ok(VerificationVerdict::new(VerdictStatus::Accepted, notes))
}

fn goal_multiset<'a>(goals: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for g in goals {
        *m.entry(normalize_goal(g)).or_default() += 1;
    }
    m
}

/// Axiom names listed in a `#print axioms` reply.
pub fn reported_axioms(response: &ReplResponse) -> BTreeSet<String> {
    const MARKER: &str = "depends on axioms:";
    let mut out = BTreeSet::new();
    for m in &response.messages {
        let Some(i) = m.data.find(MARKER) else { continue };
        let rest = &m.data[i + MARKER.len()..];
        let inner = rest
            .trim()
            .trim_start_matches('[')
            .split(']')
            .next()
            .unwrap_or("");
        out.extend(
            inner
                .split([',', '\n'])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from),
        );
    }
    out
}

/// A named declaration and the lines it spans (end exclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub name: String,
    pub start_line: u32,
    pub end_line: u32,
}

impl Declaration {
    pub fn contains_line(&self, line: u32) -> bool {
        (self.start_line..self.end_line).contains(&line)
    }
}

const DECL_KEYWORDS: &[&str] = &["theorem", "lemma", "def", "abbrev", "instance", "example", "opaque"];
const MODIFIERS: &[&str] = &[
    "private",
    "protected",
    "noncomputable",
    "partial",
    "unsafe",
    "nonrec",
];

enum LineKind {
    Decl(Option<String>),
    Namespace(String),
    Section,
    End,
    Other,
}

fn classify(line: &str) -> LineKind {
    let mut rest = line.trim_start();
    if rest.starts_with("@[") {
        match rest.find(']') {
            Some(i) => rest = rest[i + 1..].trim_start(),
            None => return LineKind::Other,
        }
    }
    let mut tokens = rest.split_whitespace().peekable();
    while tokens.peek().is_some_and(|t| MODIFIERS.contains(t)) {
        tokens.next();
    }
    match tokens.next() {
        Some("namespace") => tokens
            .next()
            .map_or(LineKind::Other, |n| LineKind::Namespace(n.to_string())),
        Some("section") => LineKind::Section,
        Some("end") => LineKind::End,
        Some(kw) if DECL_KEYWORDS.contains(&kw) => {
            let name = tokens
                .next()
                .filter(|_| kw != "example")
                .map(|t| t.split(['(', '{', '[', ':']).next().unwrap_or(""))
                .filter(|t| !t.is_empty())
                .map(String::from);
            LineKind::Decl(name)
        }
        _ => LineKind::Other,
    }
}

/// The named declaration whose text contains `line`, qualified by the
/// enclosing namespaces. `None` for anonymous declarations such as
/// `example`, which cannot be queried for axioms.
pub fn enclosing_declaration(text: &str, line: u32) -> Option<Declaration> {
    let mut scopes: Vec<Option<String>> = Vec::new();
    let mut current: Option<(Option<String>, u32)> = None;
    let mut found: Option<(Option<String>, u32)> = None;
    for (i, l) in text.lines().enumerate() {
        let n = i as u32 + 1;
        let kind = classify(l);
        let boundary = !matches!(kind, LineKind::Other);
        if boundary {
            if let Some((name, start)) = found.take() {
                return name.map(|name| Declaration {
                    name,
                    start_line: start,
                    end_line: n,
                });
            }
        }
        match kind {
            LineKind::Namespace(ns) => scopes.push(Some(ns)),
            LineKind::Section => scopes.push(None),
            LineKind::End => {
                scopes.pop();
            }
            LineKind::Decl(name) => {
                let qualified = name.map(|name| match name.strip_prefix("_root_.") {
                    Some(root) => root.to_string(),
                    None => scopes
                        .iter()
                        .flatten()
                        .cloned()
                        .chain([name])
                        .collect::<Vec<_>>()
                        .join("."),
                });
                current = Some((qualified, n));
            }
            LineKind::Other => {}
        }
        if n == line {
            found = current.clone();
        }
    }
    found.and_then(|(name, start)| {
        name.map(|name| Declaration {
            name,
            start_line: start,
            end_line: text.lines().count() as u32 + 1,
        })
    })
}

/// Anything that can judge a proposal for a record.
pub trait ProposalChecker: Send {
    fn verify(
        &mut self,
        record: &SorryRecord,
        source: &str,
        proposal: &ProofProposal,
    ) -> Result<VerificationVerdict, VerifyError>;
}

/// Checks through a REPL session.
pub struct ReplChecker {
    pub session: Box<dyn ReplSession>,
    pub config: VerifierConfig,
}

impl ProposalChecker for ReplChecker {
    fn verify(
        &mut self,
        record: &SorryRecord,
        source: &str,
        proposal: &ProofProposal,
    ) -> Result<VerificationVerdict, VerifyError> {
        verify_source(self.session.as_mut(), source, record, proposal, &self.config)
    }
}

impl Drop for ReplChecker {
    fn drop(&mut self) {
        self.session.close();
    }
}

/// Replays a fixed sequence of verdicts, one per call.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChecker {
    verdicts: Vec<VerificationVerdict>,
    cursor: usize,
}

impl ScriptedChecker {
    pub fn new(verdicts: Vec<VerificationVerdict>) -> Self {
        ScriptedChecker { verdicts, cursor: 0 }
    }

    pub fn calls(&self) -> usize {
        self.cursor
    }
}

impl ProposalChecker for ScriptedChecker {
    fn verify(&mut self, _: &SorryRecord, _: &str, _: &ProofProposal) -> Result<VerificationVerdict, VerifyError> {
        let v = self
            .verdicts
            .get(self.cursor)
            .cloned()
            .ok_or_else(|| VerifyError::Environment(format!("verdict script exhausted after {}", self.cursor)))?;
        self.cursor += 1;
        Ok(v)
    }
}

/// Accepts exactly the listed proof texts for each normalized goal. The text
/// `sorry` is rejected as `SorryCountUnchanged`; anything else unlisted is a
/// `BuildFailure`. Serialized as `{"accept": {"<goal>": ["<proof>", ...]}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableChecker {
    pub accept: BTreeMap<String, Vec<String>>,
}

impl TableChecker {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: TableChecker = serde_json::from_str(text)?;
        Ok(TableChecker {
            accept: raw
                .accept
                .into_iter()
                .map(|(goal, proofs)| (normalize_goal(&goal), proofs.iter().map(|p| p.trim().to_string()).collect()))
                .collect(),
        })
    }

    pub fn accepts(&self, goal: &str, proof: &str) -> bool {
        self.accept
            .get(&normalize_goal(goal))
            .is_some_and(|proofs| proofs.iter().any(|p| p == proof.trim()))
    }
}

impl ProposalChecker for TableChecker {
    fn verify(
        &mut self,
        record: &SorryRecord,
        _source: &str,
        proposal: &ProofProposal,
    ) -> Result<VerificationVerdict, VerifyError> {
        let text = proposal.text.trim();
        Ok(if text == SORRY {
            VerificationVerdict::new(
                VerdictStatus::SorryCountUnchanged,
                vec!["sorry count went from 1 to 1; expected 0".into()],
            )
        } else if self.accepts(&record.debug_info.goal, text) {
            VerificationVerdict::new(VerdictStatus::Accepted, vec![])
        } else {
            VerificationVerdict::new(
                VerdictStatus::BuildFailure,
                vec![format!("{}:{}: proof rejected: {text}", record.location.start_line, record.location.start_column)],
            )
        })
    }
}

/// One verdict as written to logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub sorry_id: String,
    pub origin: String,
    pub iteration: u32,
    pub status: VerdictStatus,
    pub messages: Vec<String>,
    pub elapsed_ms: u64,
}

impl VerdictRecord {
    pub fn new(proposal: &ProofProposal, verdict: &VerificationVerdict) -> Self {
        VerdictRecord {
            sorry_id: proposal.sorry_id.clone(),
            origin: proposal.origin.clone(),
            iteration: proposal.iteration,
            status: verdict.status,
            messages: verdict.messages.clone(),
            elapsed_ms: verdict.elapsed_ms,
        }
    }
}
