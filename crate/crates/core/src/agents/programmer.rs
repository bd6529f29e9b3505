use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::json;

use super::formulator::{clear_error, list_or_none, set_error};
use super::{AgentError, AgentKind, Pipeline, PipelineState, Sender, Task};
use crate::amdl::{parse_amdl, Statement, StatementKind};
use crate::execution::{clause_order, CodeTarget, ExecStatus};
use crate::llm::{ask, AskError, PromptMeta};
use crate::model::{
    extract_context, shape_label, ClauseKind, ClauseStatus, Detail, EntityRef, Mutation,
    StructuredProblem, VariableStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Code,
    Fix,
    Review,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeAnswer {
    code: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewAnswer {
    verdict: String,
    #[serde(default)]
    code: String,
}

enum Reviewed {
    Correct,
    Fixed(String),
}

/// Cheap check that a snippet belongs to the target: for AMDL it must parse
/// as the right kind of statement.
pub fn surface_check(
    problem: &StructuredProblem,
    entity: &EntityRef,
    code: &str,
    target: CodeTarget,
) -> Result<(), String> {
    if code.trim().is_empty() {
        return Err("empty code".into());
    }
    if target == CodeTarget::Script {
        if code.contains("```") {
            return Err("code contains a nested fence".into());
        }
        return Ok(());
    }
    let variables: Vec<&str> = problem.variables().map(|v| v.symbol.as_str()).collect();
    let stmt = parse_amdl(code, &variables).map_err(|e| format!("does not parse: {e}"))?;
    let expected = match entity {
        EntityRef::Variable(_) => StatementKind::Variable,
        EntityRef::Clause(id) => match problem.clause(id).map(|c| c.kind) {
            Some(ClauseKind::Objective) => StatementKind::Objective,
            _ => StatementKind::Constraint,
        },
    };
    if stmt.kind() != expected {
        return Err(format!("expected a {expected:?} statement, found {:?}", stmt.kind()).to_lowercase());
    }
    if let (Statement::Var(v), EntityRef::Variable(sym)) = (&stmt, entity) {
        if &v.name != sym {
            return Err(format!("declares `{}` instead of `{sym}`", v.name));
        }
    }
    Ok(())
}

fn plan(state: &PipelineState, task: &Task) -> Result<Vec<(EntityRef, Action)>, AgentError> {
    let p = &state.problem;
    let mut out = Vec::new();
    let review_wanted = state
        .last_eval
        .as_ref()
        .is_some_and(|e| e.status != ExecStatus::Optimal && e.revision == state.code_revision);
    if task.targets.is_empty() {
        for v in p.variables() {
            match v.status {
                VariableStatus::Defined => out.push((EntityRef::Variable(v.symbol.clone()), Action::Code)),
                VariableStatus::CodeFlagged => out.push((EntityRef::Variable(v.symbol.clone()), Action::Fix)),
                VariableStatus::Coded => {}
            }
        }
        let mut clauses: Vec<_> = p.clauses().collect();
        clauses.sort_by(|a, b| clause_order(&a.id, &b.id));
        for c in clauses {
            match c.status {
                ClauseStatus::Formulated => out.push((EntityRef::Clause(c.id.clone()), Action::Code)),
                ClauseStatus::CodeFlagged => out.push((EntityRef::Clause(c.id.clone()), Action::Fix)),
                _ => {}
            }
        }
        if out.is_empty() && review_wanted {
            for id in &state.last_eval.as_ref().expect("checked").candidates {
                out.push((EntityRef::Clause(id.clone()), Action::Review));
            }
        }
        if out.is_empty() {
            return Err(AgentError::Precondition("nothing to program".into()));
        }
        return Ok(out);
    }
    let mut vars = Vec::new();
    let mut clauses = Vec::new();
    for t in &task.targets {
        if let Some(v) = p.variable(t) {
            let action = match v.status {
                VariableStatus::Defined => Action::Code,
                VariableStatus::CodeFlagged => Action::Fix,
                VariableStatus::Coded => Action::Fix,
            };
            vars.push((EntityRef::Variable(t.clone()), action));
        } else if let Some(c) = p.clause(t) {
            let action = match c.status {
                ClauseStatus::Formulated => Action::Code,
                ClauseStatus::CodeFlagged => Action::Fix,
                ClauseStatus::Coded | ClauseStatus::Validated => Action::Review,
                ClauseStatus::Described | ClauseStatus::FormulationFlagged => {
                    return Err(AgentError::Precondition(format!(
                        "clause `{t}` has no usable formulation (status {})",
                        c.status
                    )))
                }
            };
            clauses.push((EntityRef::Clause(t.clone()), action));
        } else {
            return Err(AgentError::Precondition(format!("unknown entity `{t}`")));
        }
    }
    clauses.sort_by(|a, b| clause_order(a.0.id(), b.0.id()));
    vars.extend(clauses);
    Ok(vars)
}

fn entity_text(problem: &StructuredProblem, entity: &EntityRef, detail: Detail) -> Result<String, AgentError> {
    Ok(match entity {
        EntityRef::Clause(id) => extract_context(problem, id, detail)?.render(),
        EntityRef::Variable(sym) => {
            let v = problem.variable(sym).expect("planned entity exists");
            let mut s = format!(
                "Variable {} {} ({}): {}\n",
                v.symbol,
                shape_label(&v.shape),
                v.domain,
                v.definition
            );
            if detail == Detail::Code {
                if let Some(code) = &v.code {
                    let _ = writeln!(s, "Code: {code}");
                }
            }
            s
        }
    })
}

fn current_code(problem: &StructuredProblem, entity: &EntityRef) -> Option<String> {
    match entity {
        EntityRef::Clause(id) => problem.clause(id).and_then(|c| c.code.clone()),
        EntityRef::Variable(s) => problem.variable(s).and_then(|v| v.code.clone()),
    }
}

fn last_error(problem: &StructuredProblem, entity: &EntityRef) -> Option<String> {
    match entity {
        EntityRef::Clause(id) => problem.clause(id).and_then(|c| c.last_error.clone()),
        EntityRef::Variable(s) => problem.variable(s).and_then(|v| v.last_error.clone()),
    }
}

fn set_code(state: &mut PipelineState, entity: &EntityRef, code: String) -> Result<(), AgentError> {
    match entity {
        EntityRef::Clause(id) => state.apply(Mutation::SetClauseCode {
            clause: id.clone(),
            code,
        })?,
        EntityRef::Variable(s) => state.apply(Mutation::SetVariableCode {
            symbol: s.clone(),
            code,
        })?,
    }
    Ok(())
}

fn mark_coded(state: &mut PipelineState, entity: &EntityRef) -> Result<(), AgentError> {
    match entity {
        EntityRef::Clause(id) => {
            if state.problem.clause(id).map(|c| c.status) == Some(ClauseStatus::Validated) {
                state.clause_to(id, ClauseStatus::CodeFlagged)?;
            }
            state.clause_to(id, ClauseStatus::Coded)?
        }
        EntityRef::Variable(s) => state.variable_to(s, VariableStatus::Coded)?,
    }
    Ok(())
}

fn mark_flagged(state: &mut PipelineState, entity: &EntityRef) -> Result<(), AgentError> {
    match entity {
        EntityRef::Clause(id) => state.clause_to(id, ClauseStatus::CodeFlagged)?,
        EntityRef::Variable(s) => state.variable_to(s, VariableStatus::CodeFlagged)?,
    }
    Ok(())
}

/// Write, fix or review code. Returns a one-line outcome.
pub fn program(state: &mut PipelineState, task: &Task, ctx: &Pipeline) -> Result<String, AgentError> {
    if task.agent != AgentKind::Programmer {
        return Err(AgentError::Precondition(format!("{} task given to the programmer", task.agent)));
    }
    let steps = plan(state, task)?;
    if !ctx.settings.debug {
        if let Some((e, a)) = steps.iter().find(|(_, a)| *a != Action::Code) {
            let what = if *a == Action::Fix { "fix" } else { "review" };
            return Err(AgentError::DebugDisabled(format!("{what} the code of `{e}`")));
        }
    }
    if steps.iter().any(|(_, a)| *a != Action::Code) {
        state.fix_attempts += 1;
    }
    let target = ctx.settings.code_target;
    let target_name = match target {
        CodeTarget::Amdl => "AMDL",
        CodeTarget::Script => "script",
    };
    let syntax = ctx.prompts.get(match target {
        CodeTarget::Amdl => "syntax_amdl",
        CodeTarget::Script => "syntax_script",
    })?;
    let diagnostic = state
        .last_eval
        .as_ref()
        .map(|e| match &e.message {
            Some(m) => format!("status {}: {m}", e.status),
            None => format!("status {}", e.status),
        })
        .unwrap_or_else(|| "no evaluation yet".into());

    let mut coded = Vec::new();
    let mut fixed = Vec::new();
    let mut reviewed = Vec::new();
    let mut failed = Vec::new();
    for (entity, action) in &steps {
        let id = entity.id().to_string();
        let old = current_code(&state.problem, entity);
        let (template, rendered) = match (action, entity) {
            (Action::Code, EntityRef::Variable(_)) => {
                let text = entity_text(&state.problem, entity, Detail::Definitions)?;
                let r = ctx.messages(
                    "code_variable",
                    &[("target", target_name), ("syntax", syntax), ("variable", &text)],
                )?;
                ("code_variable", r)
            }
            (Action::Code, EntityRef::Clause(cid)) => {
                let text = entity_text(&state.problem, entity, Detail::Code)?;
                let structure = match state.problem.clause(cid).and_then(|c| c.structure.as_ref()) {
                    Some(tag) => format!("Structure: {}. Use the matching statement form.\n", tag.label()),
                    None => String::new(),
                };
                let r = ctx.messages(
                    "code_clause",
                    &[
                        ("target", target_name),
                        ("syntax", syntax),
                        ("context", &text),
                        ("structure", &structure),
                    ],
                )?;
                ("code_clause", r)
            }
            (Action::Fix, _) => {
                let text = entity_text(&state.problem, entity, Detail::Code)?;
                let error = last_error(&state.problem, entity).unwrap_or_else(|| "(no message)".into());
                let r = ctx.messages(
                    "debug",
                    &[
                        ("target", target_name),
                        ("syntax", syntax),
                        ("context", &text),
                        ("error", &error),
                    ],
                )?;
                ("debug", r)
            }
            (Action::Review, _) => {
                let text = entity_text(&state.problem, entity, Detail::Code)?;
                let r = ctx.messages(
                    "review",
                    &[
                        ("target", target_name),
                        ("syntax", syntax),
                        ("context", &text),
                        ("diagnostic", &diagnostic),
                    ],
                )?;
                ("review", r)
            }
        };
        let problem = &state.problem;
        let mut rejected_code: Option<String> = None;
        let meta = PromptMeta::new(template, id.as_str());
        let retries = ctx.settings.agent_retries;
        if *action == Action::Review {
            let asked = ask(ctx.llm, rendered, &meta, retries, |v| {
                let a: ReviewAnswer = serde_json::from_value(v).map_err(|e| format!("schema mismatch: {e}"))?;
                match a.verdict.trim() {
                    "correct" => Ok(Reviewed::Correct),
                    "fixed" => {
                        let code = a.code.trim().to_string();
                        if Some(&code) == old.as_ref() {
                            return Err("verdict is fixed but the code is unchanged".into());
                        }
                        surface_check(problem, entity, &code, target)?;
                        Ok(Reviewed::Fixed(code))
                    }
                    other => Err(format!("unknown verdict `{other}`")),
                }
            });
            match asked {
                Ok(got) => match got.value {
                    Reviewed::Correct => {
                        set_error(state, entity.clone(), format!("code judged faithful; solver reported {diagnostic}"))?;
                        state.clause_to(&id, ClauseStatus::FormulationFlagged)?;
                        reviewed.push(format!("{id} correct"));
                    }
                    Reviewed::Fixed(code) => {
                        mark_coded(state, entity)?;
                        set_code(state, entity, code)?;
                        clear_error(state, entity.clone())?;
                        reviewed.push(format!("{id} fixed"));
                    }
                },
                Err(AskError::Malformed { message, .. }) => failed.push(format!("{id}: {message}")),
                Err(AskError::Llm(e)) => return Err(e.into()),
            }
            continue;
        }
        let asked = ask(ctx.llm, rendered, &meta, retries, |v| {
            let a: CodeAnswer = serde_json::from_value(v).map_err(|e| format!("schema mismatch: {e}"))?;
            let code = a.code.trim().to_string();
            if *action == Action::Fix && Some(&code) == old.as_ref() {
                return Err("the fix repeats the failing code".into());
            }
            if let Err(e) = surface_check(problem, entity, &code, target) {
                rejected_code = Some(code);
                return Err(e);
            }
            rejected_code = None;
            Ok(code)
        });
        match asked {
            Ok(got) => {
                set_code(state, entity, got.value)?;
                clear_error(state, entity.clone())?;
                mark_coded(state, entity)?;
                if *action == Action::Code {
                    coded.push(id);
                } else {
                    fixed.push(id);
                }
            }
            Err(AskError::Malformed { message, .. }) => {
                if let Some(code) = rejected_code {
                    set_code(state, entity, code)?;
                    if *action == Action::Code {
                        mark_coded(state, entity)?;
                    }
                    mark_flagged(state, entity)?;
                }
                set_error(state, entity.clone(), message.clone())?;
                failed.push(format!("{id}: {message}"));
            }
            Err(AskError::Llm(e)) => return Err(e.into()),
        }
    }

    let mut parts = Vec::new();
    if !coded.is_empty() {
        parts.push(format!("coded {}", coded.join(", ")));
    }
    if !fixed.is_empty() {
        parts.push(format!("fixed {}", fixed.join(", ")));
    }
    if !reviewed.is_empty() {
        parts.push(format!("reviewed {}", reviewed.join(", ")));
    }
    if !failed.is_empty() {
        parts.push(format!("failed {}", failed.join("; ")));
    }
    let outcome = if parts.is_empty() {
        list_or_none(&[])
    } else {
        parts.join("; ")
    };
    state.say(
        Sender::Programmer,
        outcome.clone(),
        Some(json!({"coded": coded, "fixed": fixed, "reviewed": reviewed, "failed": failed})),
    );
    Ok(outcome)
}
