use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Message;

/// One prompt as sent: what produced it and how long it was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub template: String,
    pub subject: String,
    pub key: String,
    /// Prompt length in characters over all messages.
    pub chars: usize,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat {
            count: values.len(),
            mean,
            std: var.sqrt(),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptStats {
    pub overall: Stat,
    /// Keyed by agent (see [`agent_of`]), in order of first use.
    pub per_agent: IndexMap<String, Stat>,
    /// Keyed by template name, in order of first use.
    pub per_template: IndexMap<String, Stat>,
}

/// The role that sends prompts built from `template`.
pub fn agent_of(template: &str) -> &'static str {
    match template {
        t if t.starts_with("preprocess") => "preprocess",
        "manager" => "manager",
        "formulate" | "reformulate" | "technique" => "formulator",
        "code_variable" | "code_clause" | "debug" | "review" => "programmer",
        _ => "other",
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no prompts recorded")]
    EmptyRecord,
}

pub fn prompt_stats(records: &[PromptRecord]) -> Result<PromptStats, StatsError> {
    if records.is_empty() {
        return Err(StatsError::EmptyRecord);
    }
    let all: Vec<f64> = records.iter().map(|r| r.chars as f64).collect();
    let mut templates: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut agents: IndexMap<String, Vec<f64>> = IndexMap::new();
    for r in records {
        templates.entry(r.template.clone()).or_default().push(r.chars as f64);
        agents
            .entry(agent_of(&r.template).to_string())
            .or_default()
            .push(r.chars as f64);
    }
    let stats = |m: IndexMap<String, Vec<f64>>| m.into_iter().map(|(k, v)| (k, Stat::of(&v))).collect();
    Ok(PromptStats {
        overall: Stat::of(&all),
        per_agent: stats(agents),
        per_template: stats(templates),
    })
}
