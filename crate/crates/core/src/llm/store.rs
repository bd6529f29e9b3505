use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatRequest, ChatResponse, Message, PromptMeta, Usage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("transcript store I/O error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("corrupt transcript {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("transcript {key} already recorded with a different response")]
    Conflict { key: String },
}

/// One recorded exchange, stored as `<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub model: String,
    pub temperature: f64,
    pub template: String,
    pub subject: String,
    pub messages: Vec<Message>,
    pub response: ChatResponse,
    pub recorded_at: String,
}

impl TranscriptEntry {
    pub fn new(req: &ChatRequest, meta: &PromptMeta, response: &ChatResponse) -> Self {
        TranscriptEntry {
            key: req.key(),
            model: req.model.clone(),
            temperature: req.temperature,
            template: meta.template.clone(),
            subject: meta.subject.clone(),
            messages: req.messages.clone(),
            response: response.clone(),
            recorded_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn usage(&self) -> Usage {
        self.response.usage
    }
}

/// Content-addressed directory of recorded exchanges.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

fn io_err(path: &Path, e: impl ToString) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl TranscriptStore {
    /// Open (creating if needed) a store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(TranscriptStore { dir })
    }

    /// Open an existing store without creating anything.
    pub fn open_existing(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(io_err(&dir, "not a directory"));
        }
        Ok(TranscriptStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<TranscriptEntry>, StoreError> {
        let path = self.path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let entry: TranscriptEntry = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if entry.key != key {
            return Err(StoreError::Corrupt {
                path: path.display().to_string(),
                message: format!("file holds key {}", entry.key),
            });
        }
        Ok(Some(entry))
    }

    /// Store `entry`. Re-recording an identical response is a no-op; a
    /// different response under the same key is a conflict.
    pub fn put(&self, entry: &TranscriptEntry) -> Result<(), StoreError> {
        if let Some(existing) = self.get(&entry.key)? {
            if existing.response.content == entry.response.content {
                return Ok(());
            }
            return Err(StoreError::Conflict {
                key: entry.key.clone(),
            });
        }
        let path = self.path(&entry.key);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let text = serde_json::to_string_pretty(entry).expect("entry serializes");
        tmp.write_all(text.as_bytes()).map_err(|e| io_err(&path, e))?;
        tmp.write_all(b"\n").map_err(|e| io_err(&path, e))?;
        tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;
        Ok(())
    }

    /// All entries, sorted by key.
    pub fn entries(&self) -> Result<Vec<TranscriptEntry>, StoreError> {
        let mut keys: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| io_err(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        keys.sort();
        let mut out = Vec::with_capacity(keys.len());
        for k in keys {
            if let Some(e) = self.get(&k)? {
                out.push(e);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(content: &str) -> TranscriptEntry {
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![Message::user("q")],
            temperature: 0.0,
            max_tokens: None,
        };
        TranscriptEntry::new(
            &req,
            &PromptMeta::new("t", "s"),
            &ChatResponse {
                content: content.into(),
                usage: Usage::default(),
            },
        )
    }

    #[test]
    fn put_get_and_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let e = entry("a");
        store.put(&e).unwrap();
        store.put(&e).unwrap();
        assert_eq!(store.get(&e.key).unwrap().unwrap().response.content, "a");
        assert!(matches!(store.put(&entry("b")), Err(StoreError::Conflict { .. })));
        assert_eq!(store.entries().unwrap().len(), 1);
        assert_eq!(store.get("missing").unwrap(), None);
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("abc.json"), "{").unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        assert!(matches!(store.get("abc"), Err(StoreError::Corrupt { .. })));
    }
}
