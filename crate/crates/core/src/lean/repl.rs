//! Client side of the Lean REPL JSON protocol.
//!
//! Each request is written as one line of JSON followed by a blank line,
//! which the REPL uses as its command terminator. Responses are read until
//! they form a complete JSON value, so both single-line frames and the
//! REPL's pretty-printed output parse the same way.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::workspace::Workspace;
use crate::model::Span;

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplCommand {
    /// Source text to elaborate.
    Cmd(String),
    /// File to elaborate.
    Path(String),
    /// Tactic to run against a proof state produced by an earlier request.
    Tactic { tactic: String, proof_state: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplRequest {
    pub command: ReplCommand,
    pub env: Option<u64>,
}

impl ReplRequest {
    pub fn cmd(source: impl Into<String>) -> Self {
        ReplRequest {
            command: ReplCommand::Cmd(source.into()),
            env: None,
        }
    }

    pub fn path(path: impl Into<String>) -> Self {
        ReplRequest {
            command: ReplCommand::Path(path.into()),
            env: None,
        }
    }

    pub fn tactic(tactic: impl Into<String>, proof_state: u64) -> Self {
        ReplRequest {
            command: ReplCommand::Tactic {
                tactic: tactic.into(),
                proof_state,
            },
            env: None,
        }
    }

    pub fn in_env(mut self, env: u64) -> Self {
        self.env = Some(env);
        self
    }

    /// The text a request carries: source, path, or tactic.
    pub fn payload(&self) -> &str {
        match &self.command {
            ReplCommand::Cmd(s) | ReplCommand::Path(s) => s,
            ReplCommand::Tactic { tactic, .. } => tactic,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = match &self.command {
            ReplCommand::Cmd(s) => json!({ "cmd": s }),
            ReplCommand::Path(p) => json!({ "path": p }),
            ReplCommand::Tactic { tactic, proof_state } => {
                json!({ "tactic": tactic, "proofState": proof_state })
            }
        };
        if let Some(env) = self.env {
            v["env"] = json!(env);
        }
        v
    }

    pub fn to_frame(&self) -> String {
        self.to_json().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplMessage {
    pub severity: Severity,
    pub pos: Position,
    #[serde(rename = "endPos", default, skip_serializing_if = "Option::is_none")]
    pub end_pos: Option<Position>,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplSorry {
    pub pos: Position,
    #[serde(rename = "endPos", default, skip_serializing_if = "Option::is_none")]
    pub end_pos: Option<Position>,
    pub goal: String,
    #[serde(rename = "proofState", default, skip_serializing_if = "Option::is_none")]
    pub proof_state: Option<u64>,
}

impl ReplSorry {
    pub fn span(&self) -> Span {
        let end = self.end_pos.unwrap_or(Position {
            line: self.pos.line,
            column: self.pos.column + 5,
        });
        Span {
            start_line: self.pos.line,
            start_column: self.pos.column,
            end_line: end.line,
            end_column: end.column,
        }
    }
}

/// A parsed REPL answer. Command requests fill `env`, `messages` and
/// `sorries`; tactic requests fill `proof_state` and `goals`; a REPL-level
/// failure sets `error`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<ReplMessage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sorries: Vec<ReplSorry>,
    #[serde(rename = "proofState", default, skip_serializing_if = "Option::is_none")]
    pub proof_state: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub goals: Vec<String>,
    #[serde(rename = "message", default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReplResponse {
    pub fn errors(&self) -> impl Iterator<Item = &ReplMessage> {
        self.messages.iter().filter(|m| m.severity == Severity::Error)
    }

    pub fn has_errors(&self) -> bool {
        self.error.is_some() || self.errors().next().is_some()
    }

    /// Error texts, verbatim, including a REPL-level failure message.
    pub fn error_texts(&self) -> Vec<String> {
        self.error
            .iter()
            .cloned()
            .chain(self.errors().map(|m| m.data.clone()))
            .collect()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("failed to start REPL: {0}")]
    SpawnFailed(String),
    #[error("mock script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("mock script entry {index} expected request containing {expected:?}")]
    ScriptMismatch { index: usize, expected: String },
    #[error("REPL request timed out after {0:?}")]
    Timeout(Duration),
    #[error("unparseable REPL frame: {0}")]
    ProtocolError(String),
    #[error("REPL session died: {0}")]
    SessionDead(String),
    #[error("session is closed")]
    Closed,
}

/// Parses one response frame.
pub fn parse_frame(frame: &str) -> Result<ReplResponse, SessionError> {
    let response: ReplResponse = serde_json::from_str(frame.trim())
        .map_err(|e| SessionError::ProtocolError(format!("{e}: {}", abbreviate(frame))))?;
    if let Some(s) = response.sorries.iter().find(|s| s.goal.trim().is_empty()) {
        return Err(SessionError::ProtocolError(format!(
            "sorry at {}:{} has an empty goal",
            s.pos.line, s.pos.column
        )));
    }
    Ok(response)
}

fn abbreviate(s: &str) -> String {
    let s = s.trim();
    if s.chars().count() > 120 {
        format!("{}...", s.chars().take(120).collect::<String>())
    } else {
        s.to_string()
    }
}

/// One request in flight at a time; `&mut self` enforces the ordering.
pub trait ReplSession: Send {
    fn check(&mut self, request: &ReplRequest, timeout: Duration) -> Result<ReplResponse, SessionError>;

    /// Idempotent.
    fn close(&mut self);

    fn requests_served(&self) -> usize;
}

pub fn check_file(
    session: &mut dyn ReplSession,
    request: &ReplRequest,
    timeout: Duration,
) -> Result<ReplResponse, SessionError> {
    session.check(request, timeout)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealReplConfig {
    /// Program and arguments, run in the workspace root.
    pub command: Vec<String>,
}

impl Default for RealReplConfig {
    fn default() -> Self {
        RealReplConfig {
            command: vec!["lake".into(), "env".into(), "repl".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Real(RealReplConfig),
    Mock(PathBuf),
}

pub fn open_session(workspace: &Workspace, backend: &Backend) -> Result<Box<dyn ReplSession>, SessionError> {
    match backend {
        Backend::Real(config) => {
            if !workspace.is_built() {
                return Err(SessionError::SpawnFailed(format!(
                    "workspace {} is not built",
                    workspace.root.display()
                )));
            }
            Ok(Box::new(ProcessSession::spawn(config.command.clone(), &workspace.root)?))
        }
        Backend::Mock(script) => Ok(Box::new(ScriptedSession::from_file(script)?)),
    }
}

/// REPL child process speaking over stdin/stdout.
pub struct ProcessSession {
    command: Vec<String>,
    cwd: PathBuf,
    live: Option<LiveProcess>,
    served: usize,
    closed: bool,
}

struct LiveProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl ProcessSession {
    pub fn spawn(command: Vec<String>, cwd: &Path) -> Result<Self, SessionError> {
        let mut session = ProcessSession {
            command,
            cwd: cwd.to_path_buf(),
            live: None,
            served: 0,
            closed: false,
        };
        session.ensure_live()?;
        Ok(session)
    }

    fn ensure_live(&mut self) -> Result<&mut LiveProcess, SessionError> {
        if self.live.is_none() {
            let (program, args) = self
                .command
                .split_first()
                .ok_or_else(|| SessionError::SpawnFailed("empty REPL command".into()))?;
            let mut child = Command::new(program)
                .args(args)
                .current_dir(&self.cwd)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::null())
                .spawn()
                .map_err(|e| SessionError::SpawnFailed(format!("{program}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let Ok(line) = line else { break };
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            self.live = Some(LiveProcess {
                child,
                stdin,
                lines: rx,
            });
        }
        Ok(self.live.as_mut().expect("just spawned"))
    }

    fn kill(&mut self) {
        if let Some(mut live) = self.live.take() {
            let _ = live.child.kill();
            let _ = live.child.wait();
        }
    }

    fn read_frame(live: &mut LiveProcess, deadline: Instant, timeout: Duration) -> Result<String, SessionError> {
        let mut frame = String::new();
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match live.lines.recv_timeout(remaining) {
                Ok(line) => line,
                Err(RecvTimeoutError::Timeout) => return Err(SessionError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SessionError::SessionDead("REPL closed its output".into()))
                }
            };
            if line.trim().is_empty() {
                if frame.is_empty() {
                    continue;
                }
                return Ok(frame);
            }
            if frame.is_empty() && !line.trim_start().starts_with('{') {
                return Err(SessionError::ProtocolError(abbreviate(&line)));
            }
            frame.push_str(&line);
            frame.push('\n');
            if serde_json::from_str::<Value>(&frame).is_ok() {
                return Ok(frame);
            }
        }
    }
}

impl ReplSession for ProcessSession {
    fn check(&mut self, request: &ReplRequest, timeout: Duration) -> Result<ReplResponse, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        let deadline = Instant::now() + timeout;
        let live = self.ensure_live()?;
        let sent = writeln!(live.stdin, "{}\n", request.to_frame()).and_then(|_| live.stdin.flush());
        if let Err(e) = sent {
            self.kill();
            return Err(SessionError::SessionDead(e.to_string()));
        }
        match Self::read_frame(live, deadline, timeout) {
            Ok(frame) => {
                self.served += 1;
                parse_frame(&frame)
            }
            Err(e) => {
                // The REPL state is unknown after a timeout or a broken
                // frame; the next request starts a fresh process.
                self.kill();
                Err(e)
            }
        }
    }

    fn close(&mut self) {
        self.closed = true;
        self.kill();
    }

    fn requests_served(&self) -> usize {
        self.served
    }
}

impl Drop for ProcessSession {
    fn drop(&mut self) {
        self.kill();
    }
}

/// One canned exchange in a mock script.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Must occur in the request payload (source, path or tactic).
    #[serde(default)]
    pub expect_substring: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
    /// Literal frame text, used instead of `response` to script bad frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    /// Simulated latency; a request whose timeout is shorter fails with
    /// `Timeout` without consuming real time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl ScriptEntry {
    pub fn respond(expect: impl Into<String>, response: &ReplResponse) -> Self {
        ScriptEntry {
            expect_substring: expect.into(),
            response: Some(serde_json::to_value(response).expect("response serializes")),
            ..Default::default()
        }
    }

    pub fn raw(expect: impl Into<String>, frame: impl Into<String>) -> Self {
        ScriptEntry {
            expect_substring: expect.into(),
            raw: Some(frame.into()),
            ..Default::default()
        }
    }
}

/// Replays a script of responses in order; no toolchain required.
#[derive(Debug, Clone)]
pub struct ScriptedSession {
    entries: Vec<ScriptEntry>,
    cursor: usize,
    closed: bool,
    requests: Vec<ReplRequest>,
}

impl ScriptedSession {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedSession {
            entries,
            cursor: 0,
            closed: false,
            requests: Vec::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::SpawnFailed(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| SessionError::SpawnFailed(format!("{}: {e}", path.display())))?;
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }

    /// Requests received so far, in order.
    pub fn requests(&self) -> &[ReplRequest] {
        &self.requests
    }
}

impl ReplSession for ScriptedSession {
    fn check(&mut self, request: &ReplRequest, timeout: Duration) -> Result<ReplResponse, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        let index = self.cursor;
        let entry = self
            .entries
            .get(index)
            .ok_or(SessionError::ScriptExhausted(index))?;
        if !request.payload().contains(&entry.expect_substring) {
            return Err(SessionError::ScriptMismatch {
                index,
                expected: entry.expect_substring.clone(),
            });
        }
        self.cursor += 1;
        self.requests.push(request.clone());
        if entry.delay_ms.is_some_and(|ms| Duration::from_millis(ms) > timeout) {
            return Err(SessionError::Timeout(timeout));
        }
        let frame = match (&entry.raw, &entry.response) {
            (Some(raw), _) => raw.clone(),
            (None, Some(v)) => v.to_string(),
            (None, None) => "{}".to_string(),
        };
        parse_frame(&frame)
    }

    fn close(&mut self) {
        self.closed = true;
    }

    fn requests_served(&self) -> usize {
        self.cursor
    }
}
