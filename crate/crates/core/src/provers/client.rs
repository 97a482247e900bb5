//! Provider-neutral chat-completion interface.

use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Sampling {
    pub fn new(temperature: f64) -> Self {
        Sampling {
            temperature,
            max_tokens: 4096,
        }
    }
}

/// A chat transcript. The first message is always the system message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub messages: Vec<ChatMessage>,
    pub model_id: String,
    pub sampling: Sampling,
}

impl LlmExchange {
    pub fn push(&mut self, role: Role, content: impl Into<String>) {
        self.messages.push(ChatMessage::new(role, content));
    }

    /// All message contents joined, for substring matching.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("chat client error: {0}")]
pub struct ClientError(pub String);

pub trait LlmClient: Send {
    fn complete(&mut self, exchange: &LlmExchange) -> Result<Completion, ClientError>;
}

/// One canned completion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedCompletion {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    /// Only served when the transcript contains this text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    /// Served as a client failure instead of a completion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptedCompletion {
    pub fn text(content: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        ScriptedCompletion {
            content: content.into(),
            prompt_tokens,
            completion_tokens,
            ..Default::default()
        }
    }

    pub fn when(mut self, needle: impl Into<String>) -> Self {
        self.when = Some(needle.into());
        self
    }

    pub fn failure(message: impl Into<String>) -> Self {
        ScriptedCompletion {
            error: Some(message.into()),
            ..Default::default()
        }
    }
}

/// Serves the first not-yet-served entry at or after the cursor whose
/// `when` condition holds. The script itself is shared and immutable;
/// [`ScriptedClient::fresh`] starts a new cursor over it.
#[derive(Debug, Clone)]
pub struct ScriptedClient {
    script: Arc<Vec<ScriptedCompletion>>,
    cursor: usize,
    seen: Arc<Mutex<Vec<LlmExchange>>>,
}

impl ScriptedClient {
    pub fn new(script: Vec<ScriptedCompletion>) -> Self {
        ScriptedClient {
            script: Arc::new(script),
            cursor: 0,
            seen: Arc::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text).map_err(|e| ClientError(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn fresh(&self) -> Self {
        ScriptedClient {
            script: self.script.clone(),
            cursor: 0,
            seen: Arc::default(),
        }
    }

    /// Transcripts received by this cursor, in call order.
    pub fn seen(&self) -> Vec<LlmExchange> {
        self.seen.lock().expect("seen log lock").clone()
    }

    pub fn script(&self) -> &[ScriptedCompletion] {
        &self.script
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&mut self, exchange: &LlmExchange) -> Result<Completion, ClientError> {
        self.seen.lock().expect("seen log lock").push(exchange.clone());
        let transcript = exchange.transcript();
        let found = self.script[self.cursor.min(self.script.len())..]
            .iter()
            .position(|e| e.when.as_ref().is_none_or(|w| transcript.contains(w.as_str())));
        let Some(offset) = found else {
            return Err(ClientError(format!("script exhausted after entry {}", self.cursor)));
        };
        let entry = &self.script[self.cursor + offset];
        self.cursor += offset + 1;
        match &entry.error {
            Some(message) => Err(ClientError(message.clone())),
            None => Ok(Completion {
                content: entry.content.clone(),
                prompt_tokens: entry.prompt_tokens,
                completion_tokens: entry.completion_tokens,
            }),
        }
    }
}

/// Endpoint settings for an OpenAI-compatible `/chat/completions` service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpClientConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_http_timeout")]
    pub timeout_s: u64,
}

fn default_http_timeout() -> u64 {
    600
}

pub struct HttpChatClient {
    config: HttpClientConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpChatClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, ClientError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError(format!("environment variable {var} is not set")))?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(std::time::Duration::from_secs(config.timeout_s))
            .build();
        Ok(HttpChatClient { config, agent, api_key })
    }

    /// Request body. Tool results travel as user messages, which every
    /// provider accepts without call ids.
    pub fn request_body(exchange: &LlmExchange) -> Value {
        let messages: Vec<Value> = exchange
            .messages
            .iter()
            .map(|m| match m.role {
                Role::Tool => json!({"role": "user", "content": format!("Tool result:\n{}", m.content)}),
                role => json!({"role": role, "content": m.content}),
            })
            .collect();
        json!({
            "model": exchange.model_id,
            "messages": messages,
            "temperature": exchange.sampling.temperature,
            "max_tokens": exchange.sampling.max_tokens,
        })
    }

    pub fn parse_response(body: &Value) -> Result<Completion, ClientError> {
        let content = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ClientError(format!("response lacks choices[0].message.content: {body}")))?;
        let usage = |key: &str| body.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(Completion {
            content: content.to_string(),
            prompt_tokens: usage("prompt_tokens"),
            completion_tokens: usage("completion_tokens"),
        })
    }
}

impl LlmClient for HttpChatClient {
    fn complete(&mut self, exchange: &LlmExchange) -> Result<Completion, ClientError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut request = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = request
            .send_json(Self::request_body(exchange))
            .map_err(|e| ClientError(e.to_string()))?;
        let body: Value = response.into_json().map_err(|e| ClientError(e.to_string()))?;
        Self::parse_response(&body)
    }
}
