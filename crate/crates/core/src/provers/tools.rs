//! Library search tools available to the agentic prover.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub name: String,
    pub statement: String,
}

pub trait SearchTool: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<SearchResult>, String>;
}

/// Returns the same results for every query, or per-query results when a
/// key of `by_query` occurs in the query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticSearch {
    #[serde(default)]
    pub results: Vec<SearchResult>,
    #[serde(default)]
    pub by_query: Vec<(String, Vec<SearchResult>)>,
}

impl SearchTool for StaticSearch {
    fn search(&self, query: &str) -> Result<Vec<SearchResult>, String> {
        Ok(self
            .by_query
            .iter()
            .find(|(k, _)| query.contains(k.as_str()))
            .map_or_else(|| self.results.clone(), |(_, r)| r.clone()))
    }
}

/// POSTs `{"query": [q], "num_results": k}` and reads back objects with a
/// name and a statement-like field, flattening one level of nesting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpSearch {
    pub url: String,
    #[serde(default = "default_results")]
    pub num_results: usize,
}

fn default_results() -> usize {
    6
}

impl HttpSearch {
    pub fn parse(body: &Value) -> Vec<SearchResult> {
        let mut items: Vec<&Value> = Vec::new();
        for v in body.as_array().into_iter().flatten() {
            match v.as_array() {
                Some(inner) => items.extend(inner),
                None => items.push(v),
            }
        }
        items
            .into_iter()
            .map(|v| v.get("result").unwrap_or(v))
            .filter_map(|v| {
                let name = match v.get("name")? {
                    Value::String(s) => s.clone(),
                    Value::Array(parts) => parts.iter().filter_map(Value::as_str).collect::<Vec<_>>().join("."),
                    _ => return None,
                };
                let statement = ["statement", "signature", "formal_type", "type"]
                    .iter()
                    .find_map(|k| v.get(*k).and_then(Value::as_str))
                    .unwrap_or("")
                    .to_string();
                Some(SearchResult { name, statement })
            })
            .collect()
    }
}

impl SearchTool for HttpSearch {
    fn search(&self, query: &str) -> Result<Vec<SearchResult>, String> {
        let body: Value = ureq::post(&self.url)
            .send_json(json!({"query": [query], "num_results": self.num_results}))
            .map_err(|e| e.to_string())?
            .into_json()
            .map_err(|e| e.to_string())?;
        Ok(Self::parse(&body))
    }
}

/// Renders results as the tool message shown to the model.
pub fn render_results(results: &[SearchResult]) -> String {
    if results.is_empty() {
        return "No results.".to_string();
    }
    results
        .iter()
        .map(|r| format!("{} : {}", r.name, r.statement))
        .collect::<Vec<_>>()
        .join("\n")
}
