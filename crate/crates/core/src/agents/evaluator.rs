use serde_json::json;

use super::formulator::set_error;
use super::{AgentError, AgentKind, Evaluation, Pipeline, PipelineState, Sender, Task};
use crate::execution::{clause_order, ExecStatus, ExecutionJob, ExecutionResult};
use crate::model::{ClauseKind, ClauseStatus, EntityRef, StructuredProblem, VariableStatus};

fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = ids.map(str::to_string).collect();
    out.sort_by(|a, b| clause_order(a, b));
    out
}

/// Clauses worth reviewing after a solver report without a blamed entity.
///
/// Infeasible: every constraint. Unbounded: the constraints that share a
/// variable with the objective, or the objective alone when none do.
/// Anything else: every clause.
pub fn candidate_clauses(problem: &StructuredProblem, status: ExecStatus) -> Vec<String> {
    let constraints = problem
        .clauses()
        .filter(|c| c.kind == ClauseKind::Constraint)
        .map(|c| c.id.as_str());
    match status {
        ExecStatus::Optimal => Vec::new(),
        ExecStatus::Infeasible => sorted_ids(constraints),
        ExecStatus::Unbounded => {
            let Some(obj) = problem.objective() else {
                return sorted_ids(constraints);
            };
            let graph = problem.graph();
            let obj_vars: Vec<&str> = graph
                .edges_of(&obj.id)
                .filter(|s| problem.variable(s).is_some())
                .collect();
            let sharing: Vec<String> = sorted_ids(
                constraints.filter(|id| graph.edges_of(id).any(|s| obj_vars.contains(&s))),
            );
            if sharing.is_empty() {
                vec![obj.id.clone()]
            } else {
                sharing
            }
        }
        ExecStatus::Error | ExecStatus::Timeout => sorted_ids(problem.clauses().map(|c| c.id.as_str())),
    }
}

fn message_of(result: &ExecutionResult) -> Option<String> {
    match (&result.error, result.status) {
        (Some(e), _) => Some(match &e.entity {
            Some(id) => format!("{id}: {}", e.message),
            None => e.message.clone(),
        }),
        (None, ExecStatus::Infeasible) => Some("the model is infeasible".into()),
        (None, ExecStatus::Unbounded) => Some("the model is unbounded".into()),
        (None, ExecStatus::Timeout) => Some("the solver hit the time limit".into()),
        _ => None,
    }
}

/// Run the coded model on the backend and turn the result into flags.
pub fn evaluate(state: &mut PipelineState, task: &Task, ctx: &Pipeline) -> Result<String, AgentError> {
    if task.agent != AgentKind::Evaluator {
        return Err(AgentError::Precondition(format!("{} task given to the evaluator", task.agent)));
    }
    let job = ExecutionJob::from_problem(&state.problem, ctx.settings.code_target, ctx.settings.limits)
        .map_err(|e| AgentError::Precondition(e.to_string()))?;
    let result = ctx.backend.execute(&job)?;
    let message = message_of(&result);
    let mut blamed = None;
    let candidates = match result.status {
        ExecStatus::Optimal => {
            let coded: Vec<String> = state
                .problem
                .clauses()
                .filter(|c| c.status == ClauseStatus::Coded)
                .map(|c| c.id.clone())
                .collect();
            for id in coded {
                state.clause_to(&id, ClauseStatus::Validated)?;
            }
            Vec::new()
        }
        status => {
            let entity = result.blamed().and_then(|id| {
                if state.problem.clause(id).is_some() {
                    Some(EntityRef::Clause(id.to_string()))
                } else if state.problem.variable(id).is_some() {
                    Some(EntityRef::Variable(id.to_string()))
                } else {
                    None
                }
            });
            match entity {
                Some(entity) => {
                    let text = result.error.as_ref().map(|e| e.message.clone()).unwrap_or_default();
                    match &entity {
                        EntityRef::Clause(id) => state.clause_to(id, ClauseStatus::CodeFlagged)?,
                        EntityRef::Variable(s) => state.variable_to(s, VariableStatus::CodeFlagged)?,
                    }
                    set_error(state, entity.clone(), text)?;
                    blamed = Some(entity.id().to_string());
                    vec![entity.id().to_string()]
                }
                None => candidate_clauses(&state.problem, status),
            }
        }
    };
    let outcome = match (&result.objective, &message) {
        (Some(obj), _) if result.status == ExecStatus::Optimal => format!("optimal, objective {obj}"),
        (_, Some(m)) => format!("{}: {m}", result.status),
        _ => result.status.to_string(),
    };
    state.last_eval = Some(Evaluation {
        status: result.status,
        objective: result.objective,
        values: result.values.clone(),
        blamed: blamed.clone(),
        message,
        candidates: candidates.clone(),
        revision: state.code_revision,
    });
    state.say(
        Sender::Evaluator,
        outcome.clone(),
        Some(json!({
            "status": result.status,
            "objective": result.objective,
            "blamed": blamed,
            "candidates": candidates,
        })),
    );
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Clause, Domain, Parameter, Variable};

    fn problem() -> StructuredProblem {
        let mut p = StructuredProblem::new("bg");
        p.add_entity(Parameter::new("Cap", vec![], "capacity")).unwrap();
        p.add_entity(Variable::new("x", vec![], Domain::Continuous, "x")).unwrap();
        p.add_entity(Variable::new("y", vec![], Domain::Continuous, "y")).unwrap();
        p.add_entity(Clause::objective("max x")).unwrap();
        p.add_entity(Clause::constraint("c1", "x small")).unwrap();
        p.add_entity(Clause::constraint("c2", "y small")).unwrap();
        p.add_entity(Clause::constraint("c10", "x under cap")).unwrap();
        p.connect("obj", "x").unwrap();
        p.connect("c1", "x").unwrap();
        p.connect("c2", "y").unwrap();
        p.connect("c10", "x").unwrap();
        p.connect("c10", "Cap").unwrap();
        p
    }

    #[test]
    fn candidates_by_status() {
        let p = problem();
        assert_eq!(candidate_clauses(&p, ExecStatus::Infeasible), ["c1", "c2", "c10"]);
        assert_eq!(candidate_clauses(&p, ExecStatus::Unbounded), ["c1", "c10"]);
        assert_eq!(candidate_clauses(&p, ExecStatus::Error), ["obj", "c1", "c2", "c10"]);
        assert!(candidate_clauses(&p, ExecStatus::Optimal).is_empty());
    }

    #[test]
    fn unbounded_without_sharing_blames_objective() {
        let mut p = problem();
        p.remove_clause("c1").unwrap();
        p.remove_clause("c10").unwrap();
        assert_eq!(candidate_clauses(&p, ExecStatus::Unbounded), ["obj"]);
    }
}
