//! The structured-output contract: every answer carries exactly one fenced
//! `json` block. Unusable answers are retried with a corrective turn.

use serde_json::Value;
use thiserror::Error;

use super::{LlmClient, LlmError, Message, PromptMeta};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AskError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("malformed LLM output after {attempts} attempts: {message}")]
    Malformed { attempts: u32, message: String },
}

/// A usable answer and how many requests it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Asked<T> {
    pub value: T,
    pub attempts: u32,
}

/// Pull the single fenced `json` block out of `text`.
pub fn extract_block(text: &str) -> Result<Value, String> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```json") {
        let body = &rest[start + 7..];
        let end = body
            .find("```")
            .ok_or("unterminated ```json block")?;
        blocks.push(&body[..end]);
        rest = &body[end + 3..];
    }
    match blocks.as_slice() {
        [one] => serde_json::from_str(one.trim()).map_err(|e| format!("invalid JSON: {e}")),
        [] => Err("no ```json block found".into()),
        many => Err(format!("expected one ```json block, found {}", many.len())),
    }
}

pub fn corrective(problem: &str) -> String {
    format!(
        "Your previous answer could not be used: {problem}\n\
         Answer again with exactly one ```json fenced block that follows the requested schema."
    )
}

/// Send `messages`, parse the block and hand it to `accept`. A parse or
/// acceptance failure is retried up to `retries` times.
pub fn ask<T>(
    llm: &LlmClient,
    mut messages: Vec<Message>,
    meta: &PromptMeta,
    retries: u32,
    mut accept: impl FnMut(Value) -> Result<T, String>,
) -> Result<Asked<T>, AskError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let reply = llm.chat(messages.clone(), meta)?;
        let problem = match extract_block(&reply).and_then(&mut accept) {
            Ok(value) => return Ok(Asked { value, attempts }),
            Err(problem) => problem,
        };
        log::warn!("{meta}: unusable answer (attempt {attempts}): {problem}");
        if attempts > retries {
            return Err(AskError::Malformed {
                attempts,
                message: problem,
            });
        }
        messages.push(Message::assistant(reply));
        messages.push(Message::user(corrective(&problem)));
    }
}
