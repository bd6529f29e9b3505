use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{AgentKind, AgentMessage, Sender};
use crate::execution::ExecStatus;
use crate::model::{ClauseStatus, ModelError, Mutation, StructuredProblem, VariableStatus};

/// One status change made during an event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusChange {
    pub entity: String,
    /// `none` for an entity created by the event.
    pub from: String,
    pub to: String,
}

/// One line of `run.events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u32,
    /// `manager`, `technique`, or an agent name.
    pub agent: String,
    pub task: String,
    pub entity_ids: Vec<String>,
    pub status_changes: Vec<StatusChange>,
    pub prompt_chars: usize,
    pub outcome: String,
    /// Every problem change made by this event, in order.
    #[serde(default)]
    pub mutations: Vec<Mutation>,
}

impl Event {
    /// `agent [ids]: task -> outcome`, the form used by event goldens.
    pub fn summary(&self) -> String {
        let ids = if self.entity_ids.is_empty() {
            String::new()
        } else {
            format!(" [{}]", self.entity_ids.join(","))
        };
        format!("{}{ids}: {} -> {}", self.agent, self.task, self.outcome)
    }
}

/// The latest evaluator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub status: ExecStatus,
    pub objective: Option<f64>,
    pub values: IndexMap<String, f64>,
    /// Entity flagged for bad code, if any.
    pub blamed: Option<String>,
    pub message: Option<String>,
    /// Clauses worth reviewing when the model is infeasible, unbounded or
    /// failed without attribution.
    pub candidates: Vec<String>,
    /// Code revision the evaluation ran against.
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub problem: StructuredProblem,
    pub conversation: Vec<AgentMessage>,
    pub calls_used: IndexMap<AgentKind, u32>,
    pub budget: u32,
    pub events: Vec<Event>,
    pub last_eval: Option<Evaluation>,
    /// Bumped whenever any code snippet changes.
    pub code_revision: u64,
    pub techniques_done: bool,
    /// Fix or review rounds performed by the programmer.
    pub fix_attempts: u32,
    pending: Vec<Mutation>,
}

impl PipelineState {
    pub fn new(problem: StructuredProblem, budget: u32) -> Self {
        PipelineState {
            problem,
            conversation: Vec::new(),
            calls_used: AgentKind::ALL.iter().map(|a| (*a, 0)).collect(),
            budget,
            events: Vec::new(),
            last_eval: None,
            code_revision: 0,
            techniques_done: false,
            fix_attempts: 0,
            pending: Vec::new(),
        }
    }

    pub fn total_calls(&self) -> u32 {
        self.calls_used.values().sum()
    }

    pub fn budget_left(&self) -> u32 {
        self.budget.saturating_sub(self.total_calls())
    }

    /// Apply and record one mutation.
    pub fn apply(&mut self, m: Mutation) -> Result<(), ModelError> {
        self.problem.apply(&m)?;
        if matches!(m, Mutation::SetClauseCode { .. } | Mutation::SetVariableCode { .. }) {
            self.code_revision += 1;
        }
        self.pending.push(m);
        Ok(())
    }

    pub fn clause_to(&mut self, id: &str, to: ClauseStatus) -> Result<(), ModelError> {
        let from = self
            .problem
            .clause(id)
            .ok_or_else(|| ModelError::UnknownClause(id.to_string()))?
            .status;
        if from == to {
            return Ok(());
        }
        self.apply(Mutation::ClauseStatus {
            clause: id.to_string(),
            from,
            to,
        })
    }

    pub fn variable_to(&mut self, symbol: &str, to: VariableStatus) -> Result<(), ModelError> {
        let from = self
            .problem
            .variable(symbol)
            .ok_or_else(|| ModelError::UnknownSymbol(symbol.to_string()))?
            .status;
        if from == to {
            return Ok(());
        }
        self.apply(Mutation::VariableStatus {
            symbol: symbol.to_string(),
            from,
            to,
        })
    }

    pub fn say(&mut self, sender: Sender, content: impl Into<String>, result: Option<serde_json::Value>) {
        self.conversation.push(AgentMessage {
            sender,
            content: content.into(),
            result,
        });
    }

    /// Close the current event: everything applied since the last one is
    /// attached to it.
    pub fn log_event(
        &mut self,
        agent: &str,
        task: &str,
        targets: &[String],
        prompt_chars: usize,
        outcome: String,
    ) {
        let mutations = std::mem::take(&mut self.pending);
        let mut entity_ids: Vec<String> = targets.to_vec();
        let mut status_changes = Vec::new();
        for m in &mutations {
            let id = m.entity().id().to_string();
            if !entity_ids.contains(&id) {
                entity_ids.push(id.clone());
            }
            match m {
                Mutation::AddClause { .. } => status_changes.push(StatusChange {
                    entity: id,
                    from: "none".into(),
                    to: ClauseStatus::Described.to_string(),
                }),
                Mutation::AddVariable { .. } => status_changes.push(StatusChange {
                    entity: id,
                    from: "none".into(),
                    to: VariableStatus::Defined.to_string(),
                }),
                Mutation::ClauseStatus { from, to, .. } => status_changes.push(StatusChange {
                    entity: id,
                    from: from.to_string(),
                    to: to.to_string(),
                }),
                Mutation::VariableStatus { from, to, .. } => status_changes.push(StatusChange {
                    entity: id,
                    from: from.to_string(),
                    to: to.to_string(),
                }),
                _ => {}
            }
        }
        self.events.push(Event {
            seq: self.events.len() as u32 + 1,
            agent: agent.to_string(),
            task: task.to_string(),
            entity_ids,
            status_changes,
            prompt_chars,
            outcome,
            mutations,
        });
    }
}
