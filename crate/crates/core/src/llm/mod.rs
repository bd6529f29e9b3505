//! LLM access: chat transports, the record/replay transcript store, prompt
//! templates and prompt-length statistics.

mod http;
pub mod scripted;
mod stats;
pub mod structured;
mod store;
mod templates;

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpTransport, HttpConfig};
pub use scripted::ScriptedTransport;
pub use stats::{agent_of, prompt_stats, PromptRecord, PromptStats, Stat, StatsError};
pub use structured::{ask, extract_block, AskError, Asked};
pub use store::{StoreError, TranscriptEntry, TranscriptStore};
pub use templates::{PromptLibrary, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// Content address of the request: SHA-256 over the canonical JSON of
    /// model, messages and temperature.
    pub fn key(&self) -> String {
        let canonical = serde_json::to_string(&serde_json::json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
        }))
        .expect("request serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn check(&self) -> Result<(), String> {
        if self.messages.is_empty() {
            return Err("request has no messages".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        Ok(())
    }

    /// Prompt length in characters, summed over all messages.
    pub fn chars(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default)]
    pub usage: Usage,
}

/// What a request is for: the template that produced it and the entity or
/// task it concerns. Used for transcript bookkeeping and scripted answers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptMeta {
    pub template: String,
    pub subject: String,
}

impl PromptMeta {
    pub fn new(template: impl Into<String>, subject: impl Into<String>) -> Self {
        PromptMeta {
            template: template.into(),
            subject: subject.into(),
        }
    }
}

impl fmt::Display for PromptMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.template, self.subject)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("transport failure: {0}")]
    Fatal(String),
    #[error("provider answered HTTP {status}: {message}")]
    Provider { status: u16, message: String },
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest, meta: &PromptMeta) -> Result<ChatResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, request: &ChatRequest, meta: &PromptMeta) -> Result<ChatResponse, TransportError> {
        (**self).send(request, meta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Always call the transport; nothing is stored.
    Live,
    /// Serve from the store when possible, otherwise call the transport and
    /// store the exchange.
    Record,
    /// Serve only from the store; a miss is an error.
    Replay,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode `{other}` (live, record or replay)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("no recorded response for request {key} (template {template}, subject {subject})")]
    ReplayMiss {
        key: String,
        template: String,
        subject: String,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{mode} mode needs a {what}")]
    NotConfigured { mode: Mode, what: &'static str },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Entry point for every LLM exchange.
pub struct LlmClient {
    mode: Mode,
    model: String,
    temperature: f64,
    max_tokens: Option<u32>,
    transport: Option<Box<dyn Transport>>,
    store: Option<TranscriptStore>,
    log: Mutex<Vec<PromptRecord>>,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient")
            .field("mode", &self.mode)
            .field("model", &self.model)
            .field("store", &self.store)
            .finish()
    }
}

impl LlmClient {
    pub fn new(mode: Mode, model: impl Into<String>) -> Self {
        LlmClient {
            mode,
            model: model.into(),
            temperature: 0.0,
            max_tokens: None,
            transport: None,
            store: None,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Replay-only client over a transcript directory.
    pub fn replay(model: impl Into<String>, store: TranscriptStore) -> Self {
        LlmClient::new(Mode::Replay, model).with_store(store)
    }

    pub fn with_transport(mut self, t: impl Transport + 'static) -> Self {
        self.transport = Some(Box::new(t));
        self
    }

    pub fn with_boxed_transport(mut self, t: Box<dyn Transport>) -> Self {
        self.transport = Some(t);
        self
    }

    pub fn with_store(mut self, store: TranscriptStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = Some(n);
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn live(&self, req: &ChatRequest, meta: &PromptMeta) -> Result<ChatResponse, LlmError> {
        let t = self.transport.as_ref().ok_or(LlmError::NotConfigured {
            mode: self.mode,
            what: "transport",
        })?;
        Ok(t.send(req, meta)?)
    }

    /// Send `messages` and return the reply text.
    pub fn chat(&self, messages: Vec<Message>, meta: &PromptMeta) -> Result<String, LlmError> {
        let req = ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        req.check().map_err(LlmError::InvalidRequest)?;
        let key = req.key();
        let response = match self.mode {
            Mode::Live => self.live(&req, meta)?,
            Mode::Record | Mode::Replay => {
                let store = self.store.as_ref().ok_or(LlmError::NotConfigured {
                    mode: self.mode,
                    what: "transcript store",
                })?;
                match store.get(&key)? {
                    Some(entry) => entry.response,
                    None if self.mode == Mode::Replay => {
                        return Err(LlmError::ReplayMiss {
                            key,
                            template: meta.template.clone(),
                            subject: meta.subject.clone(),
                        })
                    }
                    None => {
                        let response = self.live(&req, meta)?;
                        store.put(&TranscriptEntry::new(&req, meta, &response))?;
                        response
                    }
                }
            }
        };
        self.log.lock().expect("prompt log lock").push(PromptRecord {
            template: meta.template.clone(),
            subject: meta.subject.clone(),
            key,
            chars: req.chars(),
            messages: req.messages,
        });
        Ok(response.content)
    }

    /// Every prompt sent so far, in order.
    pub fn prompts(&self) -> Vec<PromptRecord> {
        self.log.lock().expect("prompt log lock").clone()
    }

    pub fn clear_prompts(&self) {
        self.log.lock().expect("prompt log lock").clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Transport for Echo {
        fn send(&self, r: &ChatRequest, _: &PromptMeta) -> Result<ChatResponse, TransportError> {
            Ok(ChatResponse {
                content: format!("echo {}", r.messages.last().unwrap().content),
                usage: Usage::default(),
            })
        }
    }

    #[test]
    fn key_depends_on_content() {
        let a = ChatRequest {
            model: "m".into(),
            messages: vec![Message::user("hi")],
            temperature: 0.0,
            max_tokens: None,
        };
        let mut b = a.clone();
        assert_eq!(a.key(), b.key());
        b.messages[0].content.push('!');
        assert_ne!(a.key(), b.key());
        assert_eq!(a.key().len(), 64);
        let mut c = a.clone();
        c.max_tokens = Some(10);
        assert_eq!(a.key(), c.key());
    }

    struct Panics;

    impl Transport for Panics {
        fn send(&self, _: &ChatRequest, _: &PromptMeta) -> Result<ChatResponse, TransportError> {
            panic!("replay must not touch the transport");
        }
    }

    #[test]
    fn replay_never_uses_transport() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let meta = PromptMeta::new("t", "s");
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![Message::user("a")],
            temperature: 0.0,
            max_tokens: None,
        };
        let resp = ChatResponse {
            content: "stored  \n text".into(),
            usage: Usage::default(),
        };
        store.put(&TranscriptEntry::new(&req, &meta, &resp)).unwrap();
        let c = LlmClient::replay("m", store).with_transport(Panics);
        assert_eq!(c.chat(vec![Message::user("a")], &meta).unwrap(), resp.content);
        assert!(c.chat(vec![Message::user("b")], &meta).is_err());
    }

    #[test]
    fn invalid_requests_rejected() {
        let c = LlmClient::new(Mode::Live, "m").with_transport(Echo);
        let meta = PromptMeta::new("t", "s");
        assert!(matches!(c.chat(vec![], &meta), Err(LlmError::InvalidRequest(_))));
        let c = c.with_temperature(3.0);
        assert!(matches!(
            c.chat(vec![Message::user("a")], &meta),
            Err(LlmError::InvalidRequest(_))
        ));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let meta = PromptMeta::new("t", "s");
        let rec = LlmClient::new(Mode::Record, "m")
            .with_transport(Echo)
            .with_store(TranscriptStore::open(dir.path()).unwrap());
        assert_eq!(rec.chat(vec![Message::user("a")], &meta).unwrap(), "echo a");

        let rep = LlmClient::replay("m", TranscriptStore::open(dir.path()).unwrap());
        assert_eq!(rep.chat(vec![Message::user("a")], &meta).unwrap(), "echo a");
        let err = rep.chat(vec![Message::user("b")], &meta).unwrap_err();
        assert!(matches!(err, LlmError::ReplayMiss { ref template, .. } if template == "t"));
        assert_eq!(rep.prompts().len(), 1);
        assert_eq!(rep.prompts()[0].chars, 1);
    }

    #[test]
    fn live_needs_transport() {
        let c = LlmClient::new(Mode::Live, "m");
        assert!(matches!(
            c.chat(vec![Message::user("a")], &PromptMeta::new("t", "s")),
            Err(LlmError::NotConfigured { .. })
        ));
    }
}
