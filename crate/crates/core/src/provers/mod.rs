//! Prover strategies behind one interface: fixed tactics, independent LLM
//! samples, a self-correcting loop fed with verifier errors, and an agentic
//! loop that may search the library before proposing.

pub mod client;
pub mod prompt;
pub mod tools;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::{ProofProposal, SorryRecord, VerdictStatus, VerificationVerdict};
use crate::verifier::{ProposalChecker, VerifyError};

pub use client::{
    ChatMessage, ClientError, Completion, HttpChatClient, HttpClientConfig, LlmClient, LlmExchange, Role,
    Sampling, ScriptedClient, ScriptedCompletion,
};
pub use prompt::{build_prompt, extract_proposal, parse_tool_call, ToolCall};
pub use tools::{HttpSearch, SearchResult, SearchTool, StaticSearch};

pub const DEFAULT_CONTEXT_WINDOW: usize = 20_000;
pub const DEFAULT_SAMPLES: u32 = 32;
pub const DEFAULT_MAX_ITER: u32 = 16;
pub const DEFAULT_TOOL_ROUNDS: u32 = 5;
pub const SAMPLE_TEMPERATURE: f64 = 1.0;
pub const LOOP_TEMPERATURE: f64 = 0.7;

/// Bundled default tactic order.
pub fn default_tactics() -> Vec<String> {
    serde_json::from_str(include_str!("../../data/tactics.json")).expect("bundled tactic list parses")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProverTask {
    pub record: SorryRecord,
    /// Full text of the file holding the sorry.
    pub file_text: String,
    /// Character budget for the file excerpt in prompts.
    pub context_window: usize,
}

impl ProverTask {
    pub fn new(record: SorryRecord, file_text: impl Into<String>) -> Self {
        ProverTask {
            record,
            file_text: file_text.into(),
            context_window: DEFAULT_CONTEXT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }

    fn add(&mut self, c: &Completion) {
        self.prompt += c.prompt_tokens;
        self.completion += c.completion_tokens;
    }
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub proposal: ProofProposal,
    pub verdict: VerificationVerdict,
    /// Zero for tactic provers.
    pub tokens: TokenUsage,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub tool_rounds: u32,
}

/// Attempts of one prover on one task. Client failures are kept here
/// rather than aborting the caller.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProverRun {
    pub attempts: Vec<AttemptRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub client_errors: Vec<String>,
}

impl ProverRun {
    pub fn solved(&self) -> bool {
        self.attempts.iter().any(|a| a.verdict.is_accepted())
    }

    pub fn tokens(&self) -> TokenUsage {
        let mut t = TokenUsage::default();
        for a in &self.attempts {
            t.prompt += a.tokens.prompt;
            t.completion += a.tokens.completion;
        }
        t
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ProverError {
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

fn attempt(
    task: &ProverTask,
    checker: &mut dyn ProposalChecker,
    origin: &str,
    iteration: u32,
    text: String,
    tokens: TokenUsage,
    started: Instant,
) -> Result<AttemptRecord, ProverError> {
    let proposal = ProofProposal {
        sorry_id: task.record.id.clone(),
        text,
        origin: origin.to_string(),
        iteration,
    };
    let verdict = if proposal.text.trim().is_empty() {
        VerificationVerdict::new(VerdictStatus::BuildFailure, vec!["empty proposal".into()])
    } else {
        checker.verify(&task.record, &task.file_text, &proposal)?
    };
    Ok(AttemptRecord {
        proposal,
        verdict,
        tokens,
        wall_ms: started.elapsed().as_millis() as u64,
        tool_rounds: 0,
    })
}

/// Tries each tactic in order and stops at the first accepted one.
pub fn tactic_prover(
    task: &ProverTask,
    tactics: &[String],
    checker: &mut dyn ProposalChecker,
    origin: &str,
) -> Result<ProverRun, ProverError> {
    let mut run = ProverRun::default();
    for (i, tactic) in tactics.iter().enumerate() {
        let a = attempt(task, checker, origin, i as u32, tactic.clone(), TokenUsage::default(), Instant::now())?;
        let done = a.verdict.is_accepted();
        run.attempts.push(a);
        if done {
            break;
        }
    }
    Ok(run)
}

/// Draws `n` independent completions from the same seed prompt and verifies
/// each. A failed completion is recorded and sampling continues. Every
/// sample is verified, so more than one may be accepted.
pub fn sample_llm(
    task: &ProverTask,
    client: &mut dyn LlmClient,
    checker: &mut dyn ProposalChecker,
    n: u32,
    model_id: &str,
    sampling: Sampling,
    origin: &str,
) -> Result<ProverRun, ProverError> {
    let seed = build_prompt(task, model_id, sampling, false);
    let mut run = ProverRun::default();
    for i in 0..n {
        let started = Instant::now();
        match client.complete(&seed) {
            Ok(c) => {
                let mut tokens = TokenUsage::default();
                tokens.add(&c);
                run.attempts
                    .push(attempt(task, checker, origin, i, extract_proposal(&c.content), tokens, started)?);
            }
            Err(e) => run.client_errors.push(format!("sample {i}: {}", e.0)),
        }
    }
    Ok(run)
}

/// Feedback appended after a rejected attempt.
pub fn feedback_message(verdict: &VerificationVerdict) -> String {
    let mut s = format!("The proposal was rejected: {}.", verdict.status);
    if !verdict.messages.is_empty() {
        s.push_str("\nVerifier output:\n");
        s.push_str(&verdict.messages.join("\n"));
    }
    s.push_str("\nReply with a corrected replacement in one fenced code block.");
    s
}

/// Samples, verifies, and feeds the verdict back until acceptance or
/// `max_iter` attempts. A client failure ends the loop.
pub fn self_correct_loop(
    task: &ProverTask,
    client: &mut dyn LlmClient,
    checker: &mut dyn ProposalChecker,
    max_iter: u32,
    model_id: &str,
    sampling: Sampling,
    origin: &str,
) -> Result<ProverRun, ProverError> {
    iterate(task, client, None, checker, max_iter, 0, model_id, sampling, origin)
}

pub const BUDGET_EXHAUSTED: &str = "Tool budget exhausted for this attempt. Do not call tools; reply with your proof now.";

/// Like [`self_correct_loop`], but each attempt may first spend up to
/// `max_tool_rounds` tool calls. A further call is refused and the model
/// is told to propose; its next completion is taken as the proposal.
#[allow(clippy::too_many_arguments)]
pub fn agentic_loop(
    task: &ProverTask,
    client: &mut dyn LlmClient,
    search: &dyn SearchTool,
    checker: &mut dyn ProposalChecker,
    max_iter: u32,
    max_tool_rounds: u32,
    model_id: &str,
    sampling: Sampling,
    origin: &str,
) -> Result<ProverRun, ProverError> {
    iterate(task, client, Some(search), checker, max_iter, max_tool_rounds, model_id, sampling, origin)
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    task: &ProverTask,
    client: &mut dyn LlmClient,
    search: Option<&dyn SearchTool>,
    checker: &mut dyn ProposalChecker,
    max_iter: u32,
    max_tool_rounds: u32,
    model_id: &str,
    sampling: Sampling,
    origin: &str,
) -> Result<ProverRun, ProverError> {
    let mut exchange = build_prompt(task, model_id, sampling, search.is_some());
    let mut run = ProverRun::default();
    for i in 0..max_iter {
        let started = Instant::now();
        let mut tokens = TokenUsage::default();
        let mut rounds = 0;
        let mut refused = false;
        let text = loop {
            let c = match client.complete(&exchange) {
                Ok(c) => c,
                Err(e) => {
                    run.client_errors.push(format!("iteration {i}: {}", e.0));
                    return Ok(run);
                }
            };
            tokens.add(&c);
            exchange.push(Role::Assistant, c.content.clone());
            let call = match search {
                Some(_) if !refused => parse_tool_call(&c.content),
                _ => None,
            };
            let Some(call) = call else {
                break extract_proposal(&c.content);
            };
            if rounds >= max_tool_rounds {
                refused = true;
                exchange.push(Role::User, BUDGET_EXHAUSTED);
                continue;
            }
            rounds += 1;
            let reply = match call {
                Ok(ToolCall { tool, query }) if tool == "search" => match search.expect("tool use implies a tool").search(&query) {
                    Ok(results) => tools::render_results(&results),
                    Err(e) => format!("search failed: {e}"),
                },
                Ok(ToolCall { tool, .. }) => format!("unknown tool {tool:?}; the only tool is \"search\""),
                Err(e) => format!("malformed tool call: {e}"),
            };
            exchange.push(Role::Tool, reply);
        };
        let mut a = attempt(task, checker, origin, i, text, tokens, started)?;
        a.tool_rounds = rounds;
        let accepted = a.verdict.is_accepted();
        if !accepted {
            exchange.push(Role::User, feedback_message(&a.verdict));
        }
        run.attempts.push(a);
        if accepted {
            break;
        }
    }
    Ok(run)
}

/// Approach groups used to lay out reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ApproachGroup {
    Deterministic,
    #[serde(rename = "General-purpose")]
    GeneralPurpose,
    Specialized,
    Iterative,
}

impl ApproachGroup {
    pub const ALL: [ApproachGroup; 4] = [
        ApproachGroup::Deterministic,
        ApproachGroup::GeneralPurpose,
        ApproachGroup::Specialized,
        ApproachGroup::Iterative,
    ];

    pub fn heading(&self) -> &'static str {
        match self {
            ApproachGroup::Deterministic => "Deterministic",
            ApproachGroup::GeneralPurpose => "General-purpose LLM",
            ApproachGroup::Specialized => "Specialized LLM",
            ApproachGroup::Iterative => "Iterative",
        }
    }
}

fn d_samples() -> u32 {
    DEFAULT_SAMPLES
}
fn d_iter() -> u32 {
    DEFAULT_MAX_ITER
}
fn d_rounds() -> u32 {
    DEFAULT_TOOL_ROUNDS
}
fn d_sample_temp() -> f64 {
    SAMPLE_TEMPERATURE
}
fn d_loop_temp() -> f64 {
    LOOP_TEMPERATURE
}
fn d_max_tokens() -> u32 {
    4096
}
fn d_context() -> usize {
    DEFAULT_CONTEXT_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SearchConfig {
    Static(StaticSearch),
    Http(HttpSearch),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    Tactic {
        /// Defaults to the bundled list.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tactics: Option<Vec<String>>,
        /// JSON list of tactic strings; used when `tactics` is absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tactics_file: Option<PathBuf>,
    },
    Sample {
        #[serde(default = "d_samples")]
        n: u32,
        #[serde(default = "d_sample_temp")]
        temperature: f64,
    },
    SelfCorrect {
        #[serde(default = "d_iter")]
        max_iter: u32,
        #[serde(default = "d_loop_temp")]
        temperature: f64,
    },
    Agentic {
        #[serde(default = "d_iter")]
        max_iter: u32,
        #[serde(default = "d_rounds")]
        max_tool_rounds: u32,
        #[serde(default = "d_loop_temp")]
        temperature: f64,
        search: SearchConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientConfig {
    /// Scripted completions; relative paths resolve against the config file.
    Scripted { path: PathBuf },
    Http(HttpClientConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProverSpec {
    pub id: String,
    pub group: ApproachGroup,
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<ClientConfig>,
    #[serde(default = "d_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "d_context")]
    pub context_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProverConfig {
    pub provers: Vec<ProverSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ProverConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ProverConfig = serde_json::from_str(text).map_err(|e| ConfigError::Invalid {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        let mut ids = std::collections::BTreeSet::new();
        for p in &config.provers {
            if !ids.insert(p.id.as_str()) {
                return Err(ConfigError::Invalid {
                    path: "<inline>".into(),
                    message: format!("duplicate prover id {:?}", p.id),
                });
            }
        }
        Ok(config)
    }

    /// Loads and resolves relative file references against `path`'s directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| invalid(e.to_string()))?;
        let mut config = Self::from_json(&text).map_err(|e| invalid(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut config.provers {
            if let Some(ClientConfig::Scripted { path }) = &mut p.client {
                *path = base.join(&*path);
            }
            if let Strategy::Tactic {
                tactics_file: Some(file),
                ..
            } = &mut p.strategy
            {
                *file = base.join(&*file);
            }
        }
        Ok(config)
    }
}

/// Summary used by metrics and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProverInfo {
    pub id: String,
    pub group: ApproachGroup,
    /// Sample count for pass@k strategies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u32>,
}

enum ClientSource {
    None,
    Scripted(ScriptedClient),
    Http(HttpClientConfig),
}

enum Plan {
    Tactic(Vec<String>),
    Sample { n: u32, sampling: Sampling },
    SelfCorrect { max_iter: u32, sampling: Sampling },
    Agentic {
        max_iter: u32,
        max_tool_rounds: u32,
        sampling: Sampling,
        search: Box<dyn SearchTool>,
    },
}

fn invalid(spec: &ProverSpec, message: String) -> ConfigError {
    ConfigError::Invalid {
        path: format!("prover {}", spec.id),
        message,
    }
}

fn plan_for(spec: &ProverSpec) -> Result<Plan, ConfigError> {
    let sampling = |t: f64| Sampling {
        temperature: t,
        max_tokens: spec.max_tokens,
    };
    let plan = match &spec.strategy {
        Strategy::Tactic { tactics, tactics_file } => {
            let list = match (tactics, tactics_file) {
                (Some(t), _) => t.clone(),
                (None, Some(file)) => {
                    let text = std::fs::read_to_string(file)
                        .map_err(|e| invalid(spec, format!("{}: {e}", file.display())))?;
                    serde_json::from_str(&text).map_err(|e| invalid(spec, format!("{}: {e}", file.display())))?
                }
                (None, None) => default_tactics(),
            };
            if list.is_empty() {
                return Err(invalid(spec, "tactic list is empty".into()));
            }
            Plan::Tactic(list)
        }
        Strategy::Sample { n, temperature } => Plan::Sample {
            n: *n,
            sampling: sampling(*temperature),
        },
        Strategy::SelfCorrect { max_iter, temperature } => Plan::SelfCorrect {
            max_iter: *max_iter,
            sampling: sampling(*temperature),
        },
        Strategy::Agentic {
            max_iter,
            max_tool_rounds,
            temperature,
            search,
        } => Plan::Agentic {
            max_iter: *max_iter,
            max_tool_rounds: *max_tool_rounds,
            sampling: sampling(*temperature),
            search: match search {
                SearchConfig::Static(s) => Box::new(s.clone()),
                SearchConfig::Http(h) => Box::new(h.clone()),
            },
        },
    };
    let budget = match &plan {
        Plan::Tactic(_) => 1,
        Plan::Sample { n, .. } => *n,
        Plan::SelfCorrect { max_iter, .. } | Plan::Agentic { max_iter, .. } => *max_iter,
    };
    if budget == 0 {
        return Err(invalid(spec, "sample count and iteration budget must be at least 1".into()));
    }
    Ok(plan)
}

/// A configured prover, ready to run on tasks. Each task gets its own
/// client (a fresh cursor for scripted clients).
pub struct Prover {
    pub spec: ProverSpec,
    plan: Plan,
    client: ClientSource,
}

impl Prover {
    pub fn from_spec(spec: ProverSpec) -> Result<Self, ConfigError> {
        let plan = plan_for(&spec)?;
        let client = match (&plan, &spec.client) {
            (Plan::Tactic(_), _) => ClientSource::None,
            (_, Some(ClientConfig::Scripted { path })) => ClientSource::Scripted(
                ScriptedClient::from_file(path).map_err(|e| invalid(&spec, e.0))?,
            ),
            (_, Some(ClientConfig::Http(h))) => ClientSource::Http(h.clone()),
            (_, None) => return Err(invalid(&spec, "LLM strategies need a client".into())),
        };
        Ok(Prover { spec, plan, client })
    }

    /// An LLM prover driven by an in-memory script instead of `spec.client`.
    pub fn with_client(spec: ProverSpec, client: ScriptedClient) -> Result<Self, ConfigError> {
        let plan = plan_for(&spec)?;
        let client = match plan {
            Plan::Tactic(_) => ClientSource::None,
            _ => ClientSource::Scripted(client),
        };
        Ok(Prover { spec, plan, client })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn info(&self) -> ProverInfo {
        ProverInfo {
            id: self.spec.id.clone(),
            group: self.spec.group,
            samples: match &self.plan {
                Plan::Sample { n, .. } => Some(*n),
                _ => None,
            },
        }
    }

    fn client(&self) -> Result<Box<dyn LlmClient>, ClientError> {
        match &self.client {
            ClientSource::None => Err(ClientError("tactic provers have no client".into())),
            ClientSource::Scripted(s) => Ok(Box::new(s.fresh())),
            ClientSource::Http(h) => Ok(Box::new(HttpChatClient::new(h.clone())?)),
        }
    }

    pub fn run(&self, task: &ProverTask, checker: &mut dyn ProposalChecker) -> Result<ProverRun, ProverError> {
        let mut task = task.clone();
        task.context_window = self.spec.context_window;
        let model = self.spec.model_id.clone().unwrap_or_else(|| self.spec.id.clone());
        let origin = self.spec.id.as_str();
        if let Plan::Tactic(tactics) = &self.plan {
            return tactic_prover(&task, tactics, checker, origin);
        }
        let mut client = match self.client() {
            Ok(c) => c,
            Err(e) => {
                return Ok(ProverRun {
                    attempts: vec![],
                    client_errors: vec![e.0],
                })
            }
        };
        let client = client.as_mut();
        match &self.plan {
            Plan::Tactic(_) => unreachable!("handled above"),
            Plan::Sample { n, sampling } => sample_llm(&task, client, checker, *n, &model, *sampling, origin),
            Plan::SelfCorrect { max_iter, sampling } => {
                self_correct_loop(&task, client, checker, *max_iter, &model, *sampling, origin)
            }
            Plan::Agentic {
                max_iter,
                max_tool_rounds,
                sampling,
                search,
            } => agentic_loop(
                &task,
                client,
                search.as_ref(),
                checker,
                *max_iter,
                *max_tool_rounds,
                &model,
                *sampling,
                origin,
            ),
        }
    }
}
