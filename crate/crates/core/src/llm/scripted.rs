//! A transport that answers from a fixed script, keyed by `template/subject`.
//! Used to author transcripts and in tests.

use std::collections::HashMap;
use std::sync::Mutex;

use indexmap::IndexMap;
use serde_json::Value;

use super::{ChatRequest, ChatResponse, PromptMeta, Transport, TransportError, Usage};

#[derive(Debug, Default)]
pub struct ScriptedTransport {
    answers: IndexMap<String, Vec<String>>,
    used: Mutex<HashMap<String, usize>>,
}

/// Render a scripted answer: JSON objects become a fenced `json` block,
/// strings are sent verbatim.
pub fn render_answer(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => format!(
            "```json\n{}\n```",
            serde_json::to_string_pretty(other).expect("json value serializes")
        ),
    }
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from a JSON object mapping `template/subject` to one answer or a
    /// list of answers.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let map: IndexMap<String, Value> =
            serde_json::from_str(text).map_err(|e| format!("bad answer script: {e}"))?;
        let mut t = ScriptedTransport::new();
        for (k, v) in map {
            let answers = match v {
                Value::Array(items) => items.iter().map(render_answer).collect(),
                single => vec![render_answer(&single)],
            };
            t.answers.insert(k, answers);
        }
        Ok(t)
    }

    /// Add answers for `key`; they are consumed in order and the last one
    /// repeats.
    pub fn answer(mut self, key: &str, values: impl IntoIterator<Item = Value>) -> Self {
        self.answers
            .entry(key.to_string())
            .or_default()
            .extend(values.into_iter().map(|v| render_answer(&v)));
        self
    }

    /// Keys that were never asked for.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.lock().expect("script lock");
        self.answers
            .keys()
            .filter(|k| !used.contains_key(*k))
            .cloned()
            .collect()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, _req: &ChatRequest, meta: &PromptMeta) -> Result<ChatResponse, TransportError> {
        let key = meta.to_string();
        let answers = self
            .answers
            .get(&key)
            .ok_or_else(|| TransportError::Fatal(format!("no scripted answer for {key}")))?;
        let mut used = self.used.lock().expect("script lock");
        let n = used.entry(key).or_insert(0);
        let content = answers[(*n).min(answers.len() - 1)].clone();
        *n += 1;
        Ok(ChatResponse {
            content,
            usage: Usage::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn answers_in_order_then_repeat() {
        let t = ScriptedTransport::new().answer("m/x", [json!({"a": 1}), json!("plain")]);
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![],
            temperature: 0.0,
            max_tokens: None,
        };
        let meta = PromptMeta::new("m", "x");
        assert!(t.send(&req, &meta).unwrap().content.starts_with("```json\n{"));
        assert_eq!(t.send(&req, &meta).unwrap().content, "plain");
        assert_eq!(t.send(&req, &meta).unwrap().content, "plain");
        assert!(t.send(&req, &PromptMeta::new("m", "y")).is_err());
    }

    #[test]
    fn from_json_accepts_single_and_lists() {
        let t = ScriptedTransport::from_json(r#"{"a/b": {"k": 1}, "c/d": ["x", "y"]}"#).unwrap();
        assert_eq!(t.unused().len(), 2);
    }
}
