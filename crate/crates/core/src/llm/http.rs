use std::thread::sleep;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, PromptMeta, Transport, TransportError, Usage};

/// Connection settings for an OpenAI-compatible chat completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts after a transient failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First backoff delay; doubled on every retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    500
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }
}

#[derive(Debug)]
pub struct HttpTransport {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| TransportError::Fatal(e.to_string()))?;
        Ok(HttpTransport { config, client })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let mut body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        if let Some(n) = req.max_tokens {
            body["max_tokens"] = json!(n);
        }
        let mut call = self.client.post(self.url()).json(&body);
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                TransportError::Transient(e.to_string())
            } else {
                TransportError::Fatal(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::Transient(format!("HTTP {status}: {}", snippet(&text))));
        }
        if !status.is_success() {
            return Err(TransportError::Provider {
                status: status.as_u16(),
                message: snippet(&text).to_string(),
            });
        }
        parse_completion(&text)
    }
}

fn snippet(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn parse_completion(text: &str) -> Result<ChatResponse, TransportError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| TransportError::Fatal(format!("response is not JSON: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Fatal("response has no choices[0].message.content".into()))?;
    let usage = v
        .get("usage")
        .and_then(|u| serde_json::from_value::<Usage>(u.clone()).ok())
        .unwrap_or_default();
    Ok(ChatResponse {
        content: content.to_string(),
        usage,
    })
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest, meta: &PromptMeta) -> Result<ChatResponse, TransportError> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(req) {
                Err(TransportError::Transient(msg)) if attempt < self.config.retries => {
                    log::warn!("{meta}: {msg}; retrying in {delay:?}");
                    sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
