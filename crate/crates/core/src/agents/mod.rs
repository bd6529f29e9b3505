//! The agent loop: a manager picks the next agent and task, and the
//! formulator, programmer and evaluator mutate the structured problem until
//! the model solves or the call budget is spent.

mod evaluator;
mod formulator;
mod manager;
mod pipeline;
mod programmer;
mod state;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execution::{BackendError, CodeTarget, Limits};
use crate::llm::{LlmError, TemplateError};
use crate::model::ModelError;
use crate::preprocess::PreprocessConfig;

pub use evaluator::{candidate_clauses, evaluate};
pub use formulator::{formulate, technique_pass, Cheatsheet, CHEATSHEETS};
pub use manager::{manager_step, rule_based, status_summary};
pub use pipeline::{run_pipeline, Pipeline, RunRecord};
pub use programmer::{program, surface_check};
pub use state::{Evaluation, Event, PipelineState, StatusChange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Formulator,
    Programmer,
    Evaluator,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [
        AgentKind::Formulator,
        AgentKind::Programmer,
        AgentKind::Evaluator,
    ];
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Formulator => "formulator",
            AgentKind::Programmer => "programmer",
            AgentKind::Evaluator => "evaluator",
        })
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "formulator" => Ok(AgentKind::Formulator),
            "programmer" => Ok(AgentKind::Programmer),
            "evaluator" => Ok(AgentKind::Evaluator),
            other => Err(format!("unknown agent `{other}`")),
        }
    }
}

/// Work handed to one agent. Empty `targets` means every eligible entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub agent: AgentKind,
    pub instruction: String,
    #[serde(default)]
    pub targets: Vec<String>,
}

impl Task {
    pub fn new(agent: AgentKind, instruction: impl Into<String>, targets: Vec<String>) -> Self {
        Task {
            agent,
            instruction: instruction.into(),
            targets,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.agent, self.instruction)?;
        if !self.targets.is_empty() {
            write!(f, " [{}]", self.targets.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Done { reason: String },
    Act { task: Task },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sender {
    Manager,
    Formulator,
    Programmer,
    Evaluator,
}

impl From<AgentKind> for Sender {
    fn from(a: AgentKind) -> Self {
        match a {
            AgentKind::Formulator => Sender::Formulator,
            AgentKind::Programmer => Sender::Programmer,
            AgentKind::Evaluator => Sender::Evaluator,
        }
    }
}

/// One entry of the run's conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub sender: Sender,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Llm,
    #[default]
    Rule,
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "llm" => Ok(Policy::Llm),
            "rule" | "rule_based" => Ok(Policy::Rule),
            other => Err(format!("unknown policy `{other}` (llm or rule)")),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Llm => "llm",
            Policy::Rule => "rule",
        })
    }
}

pub const DEFAULT_BUDGET: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Maximum number of agent calls.
    pub budget: u32,
    pub policy: Policy,
    pub techniques: bool,
    pub code_target: CodeTarget,
    /// When off, the programmer refuses to fix or review code.
    pub debug: bool,
    pub limits: Limits,
    /// Local retries per agent request on unusable output.
    pub agent_retries: u32,
    pub preprocess: PreprocessConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            budget: DEFAULT_BUDGET,
            policy: Policy::Rule,
            techniques: false,
            code_target: CodeTarget::Amdl,
            debug: true,
            limits: Limits::default(),
            agent_retries: 1,
            preprocess: PreprocessConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailStage {
    Preprocess,
    ReplayMiss,
    Llm,
    Debug,
    Backend,
    /// The manager stopped without a successful evaluation.
    NoSolution,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Solved {
        objective: f64,
        values: IndexMap<String, f64>,
    },
    BudgetExhausted,
    Failed {
        stage: FailStage,
        message: String,
    },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Solved { .. } => "solved",
            Outcome::BudgetExhausted => "budget_exhausted",
            Outcome::Failed { .. } => "failed",
        }
    }

    pub fn objective(&self) -> Option<f64> {
        match self {
            Outcome::Solved { objective, .. } => Some(*objective),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("budget of {0} agent calls exhausted")]
    BudgetExhausted(u32),
    #[error("debugging is disabled; refusing to {0}")]
    DebugDisabled(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(#[from] BackendError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("illegal state change: {0}")]
    Model(#[from] ModelError),
}

impl AgentError {
    /// Errors that end the run; the rest only waste the call.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, AgentError::Precondition(_))
    }

    pub fn fail_stage(&self) -> FailStage {
        match self {
            AgentError::Llm(LlmError::ReplayMiss { .. }) => FailStage::ReplayMiss,
            AgentError::Llm(_) => FailStage::Llm,
            AgentError::DebugDisabled(_) => FailStage::Debug,
            AgentError::BackendUnavailable(_) => FailStage::Backend,
            _ => FailStage::Internal,
        }
    }
}
