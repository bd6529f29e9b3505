use std::fmt::Write as _;

use serde::Serialize;

use super::{shape_label, ModelError, StructuredProblem};

pub const NOT_WRITTEN: &str = "not yet written";

/// How much of each entity to render into a prompt context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Detail {
    Definitions,
    Formulations,
    Code,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityView {
    pub symbol: String,
    pub shape: String,
    /// `None` for parameters.
    pub domain: Option<String>,
    pub definition: String,
    /// Only populated for variables at [`Detail::Code`].
    pub code: Option<String>,
}

/// Everything a prompt about one clause is allowed to see.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextPacket {
    pub detail: Detail,
    pub background: String,
    pub clause_id: String,
    pub clause_kind: String,
    pub description: String,
    pub formulation: Option<String>,
    pub code: Option<String>,
    pub parameters: Vec<EntityView>,
    pub variables: Vec<EntityView>,
}

/// Select the clause and exactly the entities linked to it in the graph,
/// in the problem's insertion order.
pub fn extract_context(
    problem: &StructuredProblem,
    clause_id: &str,
    detail: Detail,
) -> Result<ContextPacket, ModelError> {
    let clause = problem
        .clause(clause_id)
        .ok_or_else(|| ModelError::UnknownClause(clause_id.to_string()))?;
    let graph = problem.graph();

    let parameters = problem
        .parameters()
        .filter(|p| graph.is_linked(clause_id, &p.symbol))
        .map(|p| EntityView {
            symbol: p.symbol.clone(),
            shape: shape_label(&p.shape),
            domain: None,
            definition: p.definition.clone(),
            code: None,
        })
        .collect();
    let variables = problem
        .variables()
        .filter(|v| graph.is_linked(clause_id, &v.symbol))
        .map(|v| EntityView {
            symbol: v.symbol.clone(),
            shape: shape_label(&v.shape),
            domain: Some(v.domain.to_string()),
            definition: v.definition.clone(),
            code: (detail == Detail::Code)
                .then(|| v.code.clone().unwrap_or_else(|| NOT_WRITTEN.to_string())),
        })
        .collect();

    let with = |level: Detail, field: &Option<String>| {
        (detail >= level).then(|| field.clone().unwrap_or_else(|| NOT_WRITTEN.to_string()))
    };

    Ok(ContextPacket {
        detail,
        background: problem.background.clone(),
        clause_id: clause.id.clone(),
        clause_kind: clause.kind.to_string(),
        description: clause.description.clone(),
        formulation: with(Detail::Formulations, &clause.formulation),
        code: with(Detail::Code, &clause.code),
        parameters,
        variables,
    })
}

impl ContextPacket {
    /// The clause block alone.
    pub fn render_clause(&self) -> String {
        let mut out = format!(
            "{} `{}`: {}\n",
            self.clause_kind, self.clause_id, self.description
        );
        if let Some(f) = &self.formulation {
            let _ = writeln!(out, "Formulation: {f}");
        }
        if let Some(c) = &self.code {
            let _ = writeln!(out, "Code: {c}");
        }
        out
    }

    pub fn render_parameters(&self) -> String {
        if self.parameters.is_empty() {
            return "(none)\n".to_string();
        }
        let mut out = String::new();
        for p in &self.parameters {
            let _ = writeln!(out, "- {} {}: {}", p.symbol, p.shape, p.definition);
        }
        out
    }

    pub fn render_variables(&self) -> String {
        if self.variables.is_empty() {
            return "(none)\n".to_string();
        }
        let mut out = String::new();
        for v in &self.variables {
            let domain = v.domain.as_deref().unwrap_or("continuous");
            let _ = writeln!(
                out,
                "- {} {} ({domain}): {}",
                v.symbol, v.shape, v.definition
            );
            if let Some(code) = &v.code {
                let _ = writeln!(out, "  code: {code}");
            }
        }
        out
    }

    /// Full text form: background, clause, connected parameters and variables.
    pub fn render(&self) -> String {
        format!(
            "Background: {}\n\n{}\nParameters:\n{}\nVariables:\n{}",
            self.background,
            self.render_clause(),
            self.render_parameters(),
            self.render_variables()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Clause, Dim, Domain, Parameter, Variable};

    fn base() -> StructuredProblem {
        let mut p = StructuredProblem::new("A factory makes products on machines.");
        for i in 0..48 {
            p.add_entity(Parameter::new(format!("Filler{i}"), vec![], "unused"))
                .unwrap();
        }
        p.add_entity(Parameter::new("A", vec![Dim::Named("M".into())], "matrix"))
            .unwrap();
        p.add_entity(Parameter::new("b", vec![], "rhs")).unwrap();
        p.add_entity(Variable::new("x", vec![], Domain::Continuous, "amount"))
            .unwrap();
        p.add_entity(Clause::constraint("c1", "A times x below b"))
            .unwrap();
        p.connect("c1", "b").unwrap();
        p.connect("c1", "A").unwrap();
        p.connect("c1", "x").unwrap();
        p
    }

    #[test]
    fn packet_lists_exactly_connected_entities() {
        let p = base();
        assert_eq!(p.parameters().len(), 50);
        let packet = extract_context(&p, "c1", Detail::Definitions).unwrap();
        let syms: Vec<_> = packet
            .parameters
            .iter()
            .map(|e| e.symbol.as_str())
            .collect();
        assert_eq!(syms, ["A", "b"]);
        assert_eq!(packet.variables.len(), 1);
        assert!(packet.formulation.is_none());
    }

    #[test]
    fn missing_code_rendered_as_not_written() {
        let p = base();
        let packet = extract_context(&p, "c1", Detail::Code).unwrap();
        assert_eq!(packet.variables[0].code.as_deref(), Some(NOT_WRITTEN));
        assert!(packet.render().contains("code: not yet written"));
    }

    #[test]
    fn unconnected_additions_do_not_change_packet() {
        let p = base();
        let mut q = p.clone();
        for i in 0..40 {
            q.add_entity(Parameter::new(format!("Extra{i}"), vec![], "noise"))
                .unwrap();
        }
        for d in [Detail::Definitions, Detail::Formulations, Detail::Code] {
            assert_eq!(
                extract_context(&p, "c1", d).unwrap().render(),
                extract_context(&q, "c1", d).unwrap().render()
            );
        }
    }

    #[test]
    fn unknown_clause_errors() {
        assert_eq!(
            extract_context(&base(), "c7", Detail::Code),
            Err(ModelError::UnknownClause("c7".into()))
        );
    }
}
