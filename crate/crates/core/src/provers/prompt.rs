//! Prompt construction and completion parsing.
//!
//! Proposals come back as the first fenced code block of a completion. Tool
//! calls are a single JSON object on its own line, e.g.
//! `{"tool": "search", "query": "continuous function attains max"}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::client::{ChatMessage, LlmExchange, Role, Sampling};
use super::ProverTask;

pub const SYSTEM_PROMPT: &str = "You are filling in one `sorry` in a Lean 4 project.\n\
Replace only the `sorry` marked in the file with proof text. Do not restate the theorem, \
do not add imports, and do not add or change any other declaration. Other `sorry`s in the \
file stay as they are.\n\
Reply with exactly one fenced code block containing only the replacement text.";

pub const TOOL_PROMPT: &str = "\nBefore proposing you may search the library by replying with a single line of JSON \
such as {\"tool\": \"search\", \"query\": \"<natural-language or formal query>\"}. \
Each search costs one tool round.";

const MARK_BEFORE: &str = "-- [... {} characters omitted ...]\n";
const MARK_AFTER: &str = "\n-- [... {} characters omitted ...]";

/// Cuts `file_text` to about `budget` characters centred on the line
/// holding `line`, marking any omitted prefix and suffix. The target line is
/// always kept whole, even when it alone exceeds the budget.
pub fn excerpt(file_text: &str, line: u32, budget: usize) -> String {
    let chars: Vec<char> = file_text.chars().collect();
    if chars.len() <= budget {
        return file_text.to_string();
    }
    let mut line_start = 0;
    let mut current = 1;
    while current < line && line_start < chars.len() {
        if chars[line_start] == '\n' {
            current += 1;
        }
        line_start += 1;
    }
    let line_end = chars[line_start..]
        .iter()
        .position(|&c| c == '\n')
        .map_or(chars.len(), |p| line_start + p);

    let centre = (line_start + line_end) / 2;
    let mut a = centre.saturating_sub(budget / 2);
    let b = (a + budget).min(chars.len());
    a = b.saturating_sub(budget);
    let a = a.min(line_start);
    let b = b.max(line_end);

    let mut out = String::new();
    if a > 0 {
        out.push_str(&MARK_BEFORE.replace("{}", &a.to_string()));
    }
    out.extend(&chars[a..b]);
    if b < chars.len() {
        out.push_str(&MARK_AFTER.replace("{}", &(chars.len() - b).to_string()));
    }
    out
}

pub fn is_truncated(excerpt: &str) -> bool {
    excerpt.contains("characters omitted ...]")
}

/// Seed transcript: the system contract plus one user message with the
/// repository, path, goal and a file excerpt.
pub fn build_prompt(task: &ProverTask, model_id: &str, sampling: Sampling, with_tools: bool) -> LlmExchange {
    let r = &task.record;
    let mut system = SYSTEM_PROMPT.to_string();
    if with_tools {
        system.push_str(TOOL_PROMPT);
    }
    let user = format!(
        "Repository: {}\nFile: {}\nTarget: the `sorry` at line {}, column {}\n\nGoal at the sorry:\n```\n{}\n```\n\nFile:\n```lean\n{}\n```",
        r.repo.remote,
        r.location.path,
        r.location.start_line,
        r.location.start_column,
        r.debug_info.goal,
        excerpt(&task.file_text, r.location.start_line, task.context_window),
    );
    LlmExchange {
        messages: vec![ChatMessage::new(Role::System, system), ChatMessage::new(Role::User, user)],
        model_id: model_id.to_string(),
        sampling,
    }
}

/// Text of the first fenced code block, or the whole completion when there
/// is none.
pub fn extract_proposal(completion: &str) -> String {
    let mut lines = completion.lines();
    while let Some(l) = lines.next() {
        if l.trim_start().starts_with("```") {
            let body: Vec<&str> = lines.by_ref().take_while(|l| !l.trim_start().starts_with("```")).collect();
            return body.join("\n");
        }
    }
    completion.trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub query: String,
}

/// Finds a tool-call line. `Some(Err(_))` describes a malformed call.
pub fn parse_tool_call(completion: &str) -> Option<Result<ToolCall, String>> {
    let line = completion
        .lines()
        .map(str::trim)
        .find(|l| l.starts_with('{') && l.contains("\"tool\""))?;
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return Some(Err(format!("tool call is not valid JSON: {e}"))),
    };
    let tool = value.get("tool").and_then(Value::as_str);
    let query = value.get("query").and_then(Value::as_str);
    Some(match (tool, query) {
        (Some(tool), Some(query)) if !query.trim().is_empty() => Ok(ToolCall {
            tool: tool.to_string(),
            query: query.to_string(),
        }),
        _ => Err("tool call needs string fields \"tool\" and a non-empty \"query\"".to_string()),
    })
}
