use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use super::{is_valid_symbol, ClauseKind, Dim, StructuredProblem, VariableStatus};

/// One broken invariant: which entity, which rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

static LATEX_COMMAND: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\\[A-Za-z]+").unwrap());
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z][A-Za-z0-9_]*").unwrap());

/// Identifier tokens of a formulation, with LaTeX commands and math
/// delimiters stripped. A token `a_b` that is not itself a known symbol also
/// yields its head `a` (subscript notation).
pub(crate) fn formulation_symbols<'a>(
    formulation: &str,
    known: impl Fn(&str) -> bool + 'a,
) -> Vec<String> {
    let stripped = LATEX_COMMAND.replace_all(formulation, " ");
    let stripped = stripped.replace("_{", " {");
    let mut out: Vec<String> = Vec::new();
    for m in WORD.find_iter(&stripped) {
        let tok = m.as_str().trim_end_matches('_');
        let candidate = if known(tok) {
            Some(tok)
        } else {
            tok.split('_').next().filter(|head| known(head))
        };
        if let Some(sym) = candidate {
            if !out.iter().any(|s| s == sym) {
                out.push(sym.to_string());
            }
        }
    }
    out
}

/// Check every structural invariant; an empty list means the problem is clean.
pub fn validate(problem: &StructuredProblem) -> Vec<Violation> {
    let mut out = Vec::new();

    let objectives: Vec<_> = problem
        .clauses()
        .filter(|c| c.kind == ClauseKind::Objective)
        .collect();
    match objectives.len() {
        0 => out.push(Violation::new("problem", "no objective clause")),
        1 => {}
        n => out.push(Violation::new("problem", format!("{n} objective clauses"))),
    }

    let mut seen = HashSet::new();
    for sym in problem
        .parameters()
        .map(|p| &p.symbol)
        .chain(problem.variables().map(|v| &v.symbol))
    {
        if !is_valid_symbol(sym) {
            out.push(Violation::new(sym, "malformed symbol"));
        }
        if !seen.insert(sym) {
            out.push(Violation::new(sym, "duplicate symbol"));
        }
    }

    for v in problem.variables() {
        if v.status != VariableStatus::Defined && v.code.as_deref().map_or(true, str::is_empty) {
            out.push(Violation::new(
                &v.symbol,
                format!("status {} without code", v.status),
            ));
        }
    }

    for c in problem.clauses() {
        if c.status.needs_formulation() && c.formulation.as_deref().map_or(true, str::is_empty) {
            out.push(Violation::new(
                &c.id,
                format!("status {} without formulation", c.status),
            ));
        }
        if c.status.needs_code() && c.code.as_deref().map_or(true, str::is_empty) {
            out.push(Violation::new(
                &c.id,
                format!("status {} without code", c.status),
            ));
        }
        if let Some(f) = &c.formulation {
            for sym in formulation_symbols(f, |s| problem.symbol_kind(s).is_some()) {
                if !problem.graph().is_linked(&c.id, &sym) {
                    out.push(Violation::new(
                        &c.id,
                        format!("unlinked symbol {sym} in {}", c.id),
                    ));
                }
            }
        }
    }

    let graph = problem.graph();
    for (c, s) in graph.parameter_edges() {
        if problem.clause(c).is_none() || problem.parameter(s).is_none() {
            out.push(Violation::new(
                format!("{c}--{s}"),
                "dangling parameter edge",
            ));
        }
    }
    for (c, s) in graph.variable_edges() {
        if problem.clause(c).is_none() || problem.variable(s).is_none() {
            out.push(Violation::new(
                format!("{c}--{s}"),
                "dangling variable edge",
            ));
        }
    }

    if let Some(data) = &problem.data {
        for p in problem.parameters() {
            if let Err(e) = data.check_parameter(&p.symbol, &p.shape) {
                out.push(Violation::new(&p.symbol, e.to_string()));
            }
        }
        for v in problem.variables() {
            for d in &v.shape {
                if let Dim::Named(name) = d {
                    if !data.dimensions.contains_key(name) {
                        out.push(Violation::new(
                            &v.symbol,
                            format!("dimension `{name}` is not bound in the data bundle"),
                        ));
                    }
                }
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Clause, ClauseStatus, DataBundle, Domain, Parameter, Variable};

    #[test]
    fn tokenizer_handles_latex_subscripts() {
        let known = |s: &str| matches!(s, "Profit" | "x" | "min_hours");
        let syms = formulation_symbols(r"\max \sum_{p \in P} Profit_{p} x_p + min_hours", known);
        assert_eq!(syms, ["Profit", "x", "min_hours"]);
    }

    #[test]
    fn unlinked_symbol_reported() {
        let mut p = StructuredProblem::new("bg");
        p.add_entity(Variable::new("y", vec![], Domain::Continuous, "y"))
            .unwrap();
        p.add_entity(Clause::constraint("c", "y small")).unwrap();
        p.add_entity(Clause::objective("o")).unwrap();
        p.set_formulation("c", "y \\le 3".into()).unwrap();
        p.transition_clause("c", ClauseStatus::Formulated).unwrap();
        let v = validate(&p);
        assert_eq!(v, vec![Violation::new("c", "unlinked symbol y in c")]);
        p.connect("c", "y").unwrap();
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn missing_dimension_reported() {
        let mut p = StructuredProblem::new("bg");
        p.add_entity(Clause::objective("o")).unwrap();
        p.add_entity(Parameter::new("Profit", vec![Dim::Named("P".into())], "p"))
            .unwrap();
        p.data = Some(DataBundle::from_json(r#"{"values":{"Profit":[1,2]}}"#).unwrap());
        let v = validate(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, "Profit");
        assert!(v[0].rule.contains("`P`"));
    }

    #[test]
    fn missing_objective_reported() {
        let p = StructuredProblem::new("bg");
        assert_eq!(
            validate(&p),
            vec![Violation::new("problem", "no objective clause")]
        );
    }
}
