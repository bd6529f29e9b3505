use std::fmt::Write as _;

use serde::Deserialize;

use super::{AgentError, AgentKind, Decision, Pipeline, PipelineState, Policy, Sender, Task};
use crate::execution::{clause_order, ExecStatus};
use crate::llm::{ask, AskError, PromptMeta};
use crate::model::{ClauseStatus, VariableStatus};

const CONVERSATION_TAIL: usize = 6;

fn act(agent: AgentKind, instruction: &str, targets: Vec<String>) -> Decision {
    Decision::Act {
        task: Task::new(agent, instruction, targets),
    }
}

fn sorted_clauses(state: &PipelineState, pick: impl Fn(ClauseStatus) -> bool) -> Vec<String> {
    let mut ids: Vec<String> = state
        .problem
        .clauses()
        .filter(|c| pick(c.status))
        .map(|c| c.id.clone())
        .collect();
    ids.sort_by(|a, b| clause_order(a, b));
    ids
}

/// The deterministic policy. Code problems are fixed before formulations
/// are questioned.
pub fn rule_based(state: &PipelineState) -> Decision {
    let p = &state.problem;
    if p.clauses().any(|c| c.status == ClauseStatus::Described) {
        return act(AgentKind::Formulator, "formulate all clauses", vec![]);
    }
    let uncoded = p.variables().any(|v| v.status == VariableStatus::Defined)
        || p.clauses().any(|c| c.status == ClauseStatus::Formulated);
    if uncoded {
        return act(AgentKind::Programmer, "write code for all uncoded entities", vec![]);
    }
    let mut flagged: Vec<String> = p
        .variables()
        .filter(|v| v.status == VariableStatus::CodeFlagged)
        .map(|v| v.symbol.clone())
        .collect();
    flagged.extend(sorted_clauses(state, |s| s == ClauseStatus::CodeFlagged));
    if !flagged.is_empty() {
        return act(AgentKind::Programmer, "fix the code that failed", flagged);
    }
    let flagged = sorted_clauses(state, |s| s == ClauseStatus::FormulationFlagged);
    if !flagged.is_empty() {
        return act(AgentKind::Formulator, "review and fix the flagged formulations", flagged);
    }
    match &state.last_eval {
        Some(e) if e.revision == state.code_revision => {
            if e.status == ExecStatus::Optimal {
                Decision::Done {
                    reason: "the evaluator reported an optimal solution".into(),
                }
            } else {
                act(
                    AgentKind::Programmer,
                    "review the code of the clauses that may cause the solver report",
                    e.candidates.clone(),
                )
            }
        }
        _ => act(AgentKind::Evaluator, "run the model on the data", vec![]),
    }
}

/// Plain-text state of every variable and clause plus the last evaluation.
pub fn status_summary(state: &PipelineState) -> String {
    let mut out = String::new();
    for v in state.problem.variables() {
        let _ = writeln!(out, "- variable {}: {}", v.symbol, v.status);
    }
    let mut clauses: Vec<_> = state.problem.clauses().collect();
    clauses.sort_by(|a, b| clause_order(&a.id, &b.id));
    for c in clauses {
        let _ = write!(out, "- {} {}: {}", c.kind, c.id, c.status);
        if let Some(e) = &c.last_error {
            let _ = write!(out, " (error: {e})");
        }
        out.push('\n');
    }
    match &state.last_eval {
        None => out.push_str("- not evaluated yet\n"),
        Some(e) => {
            let _ = write!(out, "- last evaluation: {}", e.status);
            if let Some(obj) = e.objective {
                let _ = write!(out, ", objective {obj}");
            }
            if e.revision != state.code_revision {
                out.push_str(", code changed since");
            }
            out.push('\n');
        }
    }
    let _ = writeln!(
        out,
        "- agent calls used: {} of {}",
        state.total_calls(),
        state.budget
    );
    out
}

fn conversation_tail(state: &PipelineState) -> String {
    let start = state.conversation.len().saturating_sub(CONVERSATION_TAIL);
    let tail = &state.conversation[start..];
    if tail.is_empty() {
        return "(empty)\n".into();
    }
    tail.iter()
        .map(|m| {
            let who = match m.sender {
                Sender::Manager => "manager",
                Sender::Formulator => "formulator",
                Sender::Programmer => "programmer",
                Sender::Evaluator => "evaluator",
            };
            format!("{who}: {}\n", m.content)
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManagerAnswer {
    agent: String,
    #[serde(default)]
    task: String,
    #[serde(default)]
    targets: Vec<String>,
}

fn llm_decision(state: &PipelineState, ctx: &Pipeline) -> Result<Option<Decision>, AgentError> {
    let status = status_summary(state);
    let conversation = conversation_tail(state);
    let messages = ctx.messages(
        "manager",
        &[
            ("background", &state.problem.background),
            ("status", &status),
            ("conversation", &conversation),
        ],
    )?;
    let problem = &state.problem;
    let asked = ask(ctx.llm, messages, &PromptMeta::new("manager", "decision"), 0, |v| {
        let a: ManagerAnswer =
            serde_json::from_value(v).map_err(|e| format!("schema mismatch: {e}"))?;
        if a.agent.trim().eq_ignore_ascii_case("done") {
            return Ok(Decision::Done { reason: a.task });
        }
        let agent: AgentKind = a.agent.parse()?;
        if let Some(bad) = a
            .targets
            .iter()
            .find(|t| problem.clause(t).is_none() && problem.variable(t).is_none())
        {
            return Err(format!("unknown target `{bad}`"));
        }
        Ok(Decision::Act {
            task: Task::new(agent, a.task, a.targets),
        })
    });
    match asked {
        Ok(got) => Ok(Some(got.value)),
        Err(AskError::Malformed { message, .. }) => {
            log::warn!("manager answer unusable ({message}); using the rule-based policy");
            Ok(None)
        }
        Err(AskError::Llm(e)) => Err(e.into()),
    }
}

/// Pick the next step. The second value is set when the LLM policy fell
/// back to the rules.
pub fn manager_step(
    state: &PipelineState,
    ctx: &Pipeline,
) -> Result<(Decision, bool), AgentError> {
    let (decision, fell_back) = match ctx.settings.policy {
        Policy::Rule => (rule_based(state), false),
        Policy::Llm => match llm_decision(state, ctx)? {
            Some(d) => (d, false),
            None => (rule_based(state), true),
        },
    };
    if matches!(decision, Decision::Act { .. }) && state.budget_left() == 0 {
        return Err(AgentError::BudgetExhausted(state.budget));
    }
    Ok((decision, fell_back))
}
