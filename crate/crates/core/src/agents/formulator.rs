use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{AgentError, AgentKind, Pipeline, PipelineState, Sender, Task};
use crate::execution::clause_order;
use crate::llm::{ask, AskError, PromptMeta};
use crate::model::{
    extract_context, formulation_symbols, is_valid_symbol, shape_label, Clause, ClauseKind,
    ClauseStatus, Detail, Dim, Domain, EntityRef, Mutation, Shape, StructureTag,
    StructuredProblem, Variable,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewVariable {
    symbol: String,
    #[serde(default)]
    shape: Shape,
    #[serde(default = "continuous")]
    domain: Domain,
    definition: String,
}

fn continuous() -> Domain {
    Domain::Continuous
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuxConstraint {
    description: String,
    formulation: String,
    #[serde(default)]
    related: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormulateAnswer {
    formulation: String,
    #[serde(default)]
    related: Vec<String>,
    #[serde(default)]
    new_variables: Vec<NewVariable>,
    #[serde(default)]
    auxiliary_constraints: Vec<AuxConstraint>,
}

/// Every variable of the problem, one line each.
pub(crate) fn known_variables(problem: &StructuredProblem) -> String {
    if problem.variables().len() == 0 {
        return "(none)\n".into();
    }
    problem
        .variables()
        .map(|v| {
            format!(
                "- {} {} ({}): {}\n",
                v.symbol,
                shape_label(&v.shape),
                v.domain,
                v.definition
            )
        })
        .collect()
}

fn check_related(
    known: &dyn Fn(&str) -> bool,
    formulation: &str,
    related: &[String],
) -> Result<(), String> {
    if formulation.trim().is_empty() {
        return Err("empty formulation".into());
    }
    if let Some(bad) = related.iter().find(|s| !known(s)) {
        return Err(format!(
            "`{bad}` is neither an existing symbol nor a declared new variable"
        ));
    }
    for sym in formulation_symbols(formulation, known) {
        if !related.contains(&sym) {
            return Err(format!("the formulation uses `{sym}` but `related` omits it"));
        }
    }
    Ok(())
}

fn check_answer(problem: &StructuredProblem, a: &FormulateAnswer) -> Result<(), String> {
    let mut fresh: HashSet<&str> = HashSet::new();
    for nv in &a.new_variables {
        if !is_valid_symbol(&nv.symbol) {
            return Err(format!("malformed variable symbol `{}`", nv.symbol));
        }
        crate::model::check_shape(&nv.symbol, &nv.shape).map_err(|e| e.to_string())?;
        if let Some(data) = &problem.data {
            for d in &nv.shape {
                if let Dim::Named(n) = d {
                    if !data.dimensions.contains_key(n) {
                        return Err(format!("dimension `{n}` of `{}` is not in the data", nv.symbol));
                    }
                }
            }
        }
        match (problem.parameter(&nv.symbol), problem.variable(&nv.symbol)) {
            (Some(_), _) => return Err(format!("`{}` is already a parameter", nv.symbol)),
            (_, Some(v)) if v.shape != nv.shape || v.domain != nv.domain => {
                return Err(format!("`{}` already exists with another shape or domain", nv.symbol))
            }
            _ => {}
        }
        if !fresh.insert(&nv.symbol) {
            return Err(format!("`{}` declared twice", nv.symbol));
        }
    }
    let known = |s: &str| problem.symbol_kind(s).is_some() || fresh.contains(s);
    check_related(&known, &a.formulation, &a.related)?;
    for aux in &a.auxiliary_constraints {
        if aux.description.trim().is_empty() {
            return Err("auxiliary constraint without description".into());
        }
        check_related(&known, &aux.formulation, &aux.related)?;
    }
    Ok(())
}

fn apply_answer(
    state: &mut PipelineState,
    clause_id: &str,
    a: FormulateAnswer,
) -> Result<(Vec<String>, Vec<String>), AgentError> {
    let mut new_vars = Vec::new();
    for nv in a.new_variables {
        if state.problem.variable(&nv.symbol).is_none() {
            new_vars.push(nv.symbol.clone());
            state.apply(Mutation::AddVariable {
                variable: Variable::new(nv.symbol, nv.shape, nv.domain, nv.definition),
            })?;
        }
    }
    state.apply(Mutation::SetFormulation {
        clause: clause_id.to_string(),
        formulation: a.formulation,
    })?;
    state.apply(Mutation::SetLinks {
        clause: clause_id.to_string(),
        symbols: a.related,
    })?;
    clear_error(state, EntityRef::Clause(clause_id.to_string()))?;
    state.clause_to(clause_id, ClauseStatus::Formulated)?;
    let mut aux_ids = Vec::new();
    for aux in a.auxiliary_constraints {
        let id = state.problem.next_constraint_id();
        state.apply(Mutation::AddClause {
            clause: Clause::constraint(&id, aux.description),
        })?;
        state.apply(Mutation::SetFormulation {
            clause: id.clone(),
            formulation: aux.formulation,
        })?;
        state.apply(Mutation::SetLinks {
            clause: id.clone(),
            symbols: aux.related,
        })?;
        state.clause_to(&id, ClauseStatus::Formulated)?;
        aux_ids.push(id);
    }
    Ok((new_vars, aux_ids))
}

pub(crate) fn clear_error(state: &mut PipelineState, entity: EntityRef) -> Result<(), AgentError> {
    let has = match &entity {
        EntityRef::Clause(id) => state.problem.clause(id).and_then(|c| c.last_error.as_ref()),
        EntityRef::Variable(s) => state.problem.variable(s).and_then(|v| v.last_error.as_ref()),
    }
    .is_some();
    if has {
        state.apply(Mutation::SetError { entity, error: None })?;
    }
    Ok(())
}

pub(crate) fn set_error(
    state: &mut PipelineState,
    entity: EntityRef,
    error: String,
) -> Result<(), AgentError> {
    state.apply(Mutation::SetError {
        entity,
        error: Some(error),
    })?;
    Ok(())
}

/// Write or fix formulations. Returns a one-line outcome.
pub fn formulate(state: &mut PipelineState, task: &Task, ctx: &Pipeline) -> Result<String, AgentError> {
    if task.agent != AgentKind::Formulator {
        return Err(AgentError::Precondition(format!("{} task given to the formulator", task.agent)));
    }
    let targets: Vec<String> = if task.targets.is_empty() {
        let mut ids: Vec<String> = state
            .problem
            .clauses()
            .filter(|c| matches!(c.status, ClauseStatus::Described | ClauseStatus::FormulationFlagged))
            .map(|c| c.id.clone())
            .collect();
        ids.sort_by(|a, b| clause_order(a, b));
        ids
    } else {
        for t in &task.targets {
            if state.problem.clause(t).is_none() {
                return Err(AgentError::Precondition(format!("`{t}` is not a clause")));
            }
        }
        task.targets.clone()
    };
    if targets.is_empty() {
        return Err(AgentError::Precondition("no clause needs a formulation".into()));
    }

    let mut done = Vec::new();
    let mut failed = Vec::new();
    let mut created = Vec::new();
    for id in &targets {
        let clause = state.problem.clause(id).expect("target checked").clone();
        let fixing = clause.status != ClauseStatus::Described;
        if fixing && clause.status != ClauseStatus::FormulationFlagged {
            state.clause_to(id, ClauseStatus::FormulationFlagged)?;
        }
        let (template, detail) = if fixing {
            ("reformulate", Detail::Formulations)
        } else {
            ("formulate", Detail::Definitions)
        };
        let context = extract_context(&state.problem, id, detail)?.render();
        let variables = known_variables(&state.problem);
        let feedback = clause
            .last_error
            .clone()
            .unwrap_or_else(|| task.instruction.clone());
        let mut vars = vec![("context", context.as_str()), ("known_variables", variables.as_str())];
        if fixing {
            vars.push(("feedback", feedback.as_str()));
        }
        let messages = ctx.messages(template, &vars)?;
        let problem = &state.problem;
        let asked = ask(
            ctx.llm,
            messages,
            &PromptMeta::new(template, id.as_str()),
            ctx.settings.agent_retries,
            |v| {
                let a: FormulateAnswer =
                    serde_json::from_value(v).map_err(|e| format!("schema mismatch: {e}"))?;
                check_answer(problem, &a)?;
                Ok(a)
            },
        );
        match asked {
            Ok(got) => {
                let (vars, aux) = apply_answer(state, id, got.value)?;
                created.extend(vars);
                done.push(id.clone());
                done.extend(aux);
            }
            Err(AskError::Malformed { message, .. }) => {
                set_error(state, EntityRef::Clause(id.clone()), message.clone())?;
                failed.push(format!("{id}: {message}"));
            }
            Err(AskError::Llm(e)) => return Err(e.into()),
        }
    }

    let mut outcome = format!("formulated {}", list_or_none(&done));
    if !created.is_empty() {
        let _ = write!(outcome, "; new variables {}", created.join(", "));
    }
    if !failed.is_empty() {
        let _ = write!(outcome, "; failed {}", failed.join("; "));
    }
    state.say(
        Sender::Formulator,
        outcome.clone(),
        Some(json!({"formulated": done, "new_variables": created, "failed": failed})),
    );
    Ok(outcome)
}

pub(crate) fn list_or_none(ids: &[String]) -> String {
    if ids.is_empty() {
        "nothing".into()
    } else {
        ids.join(", ")
    }
}

/// A structure the solver handles natively, offered to the formulator once
/// after the first full formulation.
#[derive(Debug, Clone, Copy)]
pub struct Cheatsheet {
    pub name: &'static str,
    pub structure: &'static str,
    pub example: &'static str,
    pub schema: &'static str,
}

pub const CHEATSHEETS: [Cheatsheet; 3] = [
    Cheatsheet {
        name: "special ordered set",
        structure: "In an SOS1 set at most one variable is nonzero. In an SOS2 set at most two are nonzero and they are adjacent in the set order, which models a piecewise-linear function through weights on its breakpoints.",
        example: "Clause: the cost is piecewise linear in the amount produced, with breakpoints B and costs F.\nFormulation: amount = \\sum_k B_k \\lambda_k, cost = \\sum_k F_k \\lambda_k, \\sum_k \\lambda_k = 1, (\\lambda_k)_k \\in SOS2",
        schema: r#"{"kind": "sos1 | sos2", "members": ["variable symbols"]}"#,
    },
    Cheatsheet {
        name: "indicator",
        structure: "An indicator constraint is a linear constraint enforced only when a binary variable takes a given value, written b = 1 -> a x <= c. The solver handles it without a big-M constant.",
        example: "Clause: an open warehouse ships at most its capacity.\nFormulation: open_w = 1 \\Rightarrow \\sum_c ship_{w,c} \\le Cap_w",
        schema: r#"{"kind": "indicator", "binary": "variable symbol", "value": true}"#,
    },
    Cheatsheet {
        name: "general constraint",
        structure: "General constraints state max, min, absolute value or logical and/or of variables directly instead of linearizing them by hand.",
        example: "Clause: the peak load is the largest hourly load.\nFormulation: peak = \\max_t load_t",
        schema: r#"{"kind": "general", "function": "max | min | abs | and | or"}"#,
    },
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TechniqueAnswer {
    applicable: bool,
    #[serde(default)]
    clause: Option<String>,
    #[serde(default)]
    formulation: Option<String>,
    #[serde(default)]
    structure: Option<StructureTag>,
}

fn sheet_accepts(sheet: &Cheatsheet, tag: &StructureTag) -> bool {
    matches!(
        (sheet.name, tag),
        ("special ordered set", StructureTag::Sos1 { .. } | StructureTag::Sos2 { .. })
            | ("indicator", StructureTag::Indicator { .. })
            | ("general constraint", StructureTag::General { .. })
    )
}

fn clause_list(problem: &StructuredProblem) -> String {
    let mut clauses: Vec<&Clause> = problem.clauses().collect();
    clauses.sort_by(|a, b| clause_order(&a.id, &b.id));
    let mut out = String::new();
    for c in clauses {
        let _ = writeln!(out, "- {} ({}): {}", c.id, c.kind, c.description);
        if let Some(f) = &c.formulation {
            let _ = writeln!(out, "  formulation: {f}");
        }
    }
    out
}

/// Offer every cheatsheet once. Applicable answers rewrite the named
/// clause and attach a structure tag; unusable answers skip the sheet.
pub fn technique_pass(state: &mut PipelineState, ctx: &Pipeline) -> Result<String, AgentError> {
    if let Some(c) = state
        .problem
        .clauses()
        .find(|c| c.status == ClauseStatus::Described)
    {
        return Err(AgentError::Precondition(format!("clause `{}` is not formulated", c.id)));
    }
    let mut notes = Vec::new();
    for sheet in &CHEATSHEETS {
        let clauses = clause_list(&state.problem);
        let messages = ctx.messages(
            "technique",
            &[
                ("name", sheet.name),
                ("structure", sheet.structure),
                ("example", sheet.example),
                ("clauses", &clauses),
                ("schema", sheet.schema),
            ],
        )?;
        let problem = &state.problem;
        let asked = ask(
            ctx.llm,
            messages,
            &PromptMeta::new("technique", sheet.name),
            ctx.settings.agent_retries,
            |v: Value| {
                let a: TechniqueAnswer =
                    serde_json::from_value(v).map_err(|e| format!("schema mismatch: {e}"))?;
                if !a.applicable {
                    return Ok(None);
                }
                let id = a.clause.ok_or("applicable answer names no clause")?;
                let clause = problem
                    .clause(&id)
                    .ok_or_else(|| format!("unknown clause `{id}`"))?;
                if clause.kind == ClauseKind::Objective {
                    return Err("structures apply to constraints only".into());
                }
                let tag = a.structure.ok_or("applicable answer gives no structure")?;
                if !sheet_accepts(sheet, &tag) {
                    return Err(format!("structure {} does not belong to this sheet", tag.label()));
                }
                if let Some(bad) = tag.symbols().into_iter().find(|s| problem.variable(s).is_none()) {
                    return Err(format!("`{bad}` is not a variable"));
                }
                let formulation = a.formulation.ok_or("applicable answer gives no formulation")?;
                let known = |s: &str| problem.symbol_kind(s).is_some();
                if formulation.trim().is_empty() {
                    return Err("empty formulation".into());
                }
                let mut links: Vec<String> = problem.graph().edges_of(&id).map(str::to_string).collect();
                for s in formulation_symbols(&formulation, known)
                    .into_iter()
                    .chain(tag.symbols().into_iter().map(str::to_string))
                {
                    if !links.contains(&s) {
                        links.push(s);
                    }
                }
                Ok(Some((id, formulation, tag, links)))
            },
        );
        match asked {
            Ok(got) => match got.value {
                None => notes.push(format!("{}: not applicable", sheet.name)),
                Some((id, formulation, tag, links)) => {
                    notes.push(format!("{}: {} tagged {}", sheet.name, id, tag.label()));
                    state.apply(Mutation::SetFormulation {
                        clause: id.clone(),
                        formulation,
                    })?;
                    state.apply(Mutation::SetLinks {
                        clause: id.clone(),
                        symbols: links,
                    })?;
                    state.apply(Mutation::SetStructure {
                        clause: id,
                        tag: Some(tag),
                    })?;
                }
            },
            Err(AskError::Malformed { message, .. }) => {
                log::warn!("technique sheet {} skipped: {message}", sheet.name);
                notes.push(format!("{}: skipped ({message})", sheet.name));
            }
            Err(AskError::Llm(e)) => return Err(e.into()),
        }
    }
    state.techniques_done = true;
    let outcome = notes.join("; ");
    state.say(Sender::Formulator, format!("technique pass: {outcome}"), None);
    Ok(outcome)
}
