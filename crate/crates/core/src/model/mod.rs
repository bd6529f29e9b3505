//! Structured problem state: parameters, variables, clauses, the connection
//! graph linking clauses to the entities they mention, and the numeric data
//! kept apart from the text.

mod context;
mod data;
mod dot;
mod graph;
mod mutation;
mod validate;

use std::fmt;
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{extract_context, ContextPacket, Detail, EntityView};
pub use data::{DataBundle, DataError, ParamValue};
pub use dot::to_dot;
pub use graph::ConnectionGraph;
pub use mutation::{EntityRef, Mutation};
pub use validate::{validate, Violation};
pub(crate) use validate::formulation_symbols;

/// Maximum number of dimensions a parameter or variable may carry.
pub const MAX_DIMS: usize = 3;

static SYMBOL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z][A-Za-z0-9_]*$").expect("symbol regex"));

pub fn is_valid_symbol(s: &str) -> bool {
    SYMBOL_RE.is_match(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("malformed symbol `{0}`")]
    MalformedSymbol(String),
    #[error("malformed shape for `{symbol}`: {reason}")]
    MalformedShape { symbol: String, reason: String },
    #[error("problem already has an objective clause (`{0}`)")]
    DuplicateObjective(String),
    #[error("duplicate clause id `{0}`")]
    DuplicateClause(String),
    #[error("unknown clause `{0}`")]
    UnknownClause(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("illegal status transition for `{entity}`: {from} -> {to}")]
    IllegalTransition {
        entity: String,
        from: String,
        to: String,
    },
    #[error("`{entity}` cannot enter status {status} without {missing}")]
    MissingField {
        entity: String,
        status: String,
        missing: &'static str,
    },
}

/// One dimension of a shape: either a named dimension bound in the data
/// bundle or a literal positive size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dim {
    Fixed(usize),
    Named(String),
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Fixed(n) => write!(f, "{n}"),
            Dim::Named(s) => f.write_str(s),
        }
    }
}

pub type Shape = Vec<Dim>;

pub fn shape_label(shape: &[Dim]) -> String {
    if shape.is_empty() {
        "scalar".to_string()
    } else {
        let dims: Vec<String> = shape.iter().map(Dim::to_string).collect();
        format!("[{}]", dims.join(", "))
    }
}

pub(crate) fn check_shape(symbol: &str, shape: &[Dim]) -> Result<(), ModelError> {
    if shape.len() > MAX_DIMS {
        return Err(ModelError::MalformedShape {
            symbol: symbol.to_string(),
            reason: format!("{} dimensions (max {MAX_DIMS})", shape.len()),
        });
    }
    for d in shape {
        match d {
            Dim::Fixed(0) => {
                return Err(ModelError::MalformedShape {
                    symbol: symbol.to_string(),
                    reason: "literal dimension must be positive".into(),
                })
            }
            Dim::Named(n) if !is_valid_symbol(n) => {
                return Err(ModelError::MalformedShape {
                    symbol: symbol.to_string(),
                    reason: format!("bad dimension name `{n}`"),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub symbol: String,
    #[serde(default)]
    pub shape: Shape,
    pub definition: String,
}

impl Parameter {
    pub fn new(symbol: impl Into<String>, shape: Shape, definition: impl Into<String>) -> Self {
        Self {
            symbol: symbol.into(),
            shape,
            definition: definition.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Continuous,
    Integer,
    Binary,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Continuous => "continuous",
            Domain::Integer => "integer",
            Domain::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableStatus {
    Defined,
    Coded,
    CodeFlagged,
}

impl VariableStatus {
    pub fn can_transition(self, to: VariableStatus) -> bool {
        use VariableStatus::*;
        matches!(
            (self, to),
            (Defined, Coded) | (Coded, CodeFlagged) | (CodeFlagged, Coded)
        )
    }
}

impl fmt::Display for VariableStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariableStatus::Defined => "defined",
            VariableStatus::Coded => "coded",
            VariableStatus::CodeFlagged => "code_flagged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub symbol: String,
    #[serde(default)]
    pub shape: Shape,
    pub domain: Domain,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub status: VariableStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl Variable {
    pub fn new(
        symbol: impl Into<String>,
        shape: Shape,
        domain: Domain,
        definition: impl Into<String>,
    ) -> Self {
        Self {
            symbol: symbol.into(),
            shape,
            domain,
            definition: definition.into(),
            code: None,
            status: VariableStatus::Defined,
            last_error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    Objective,
    Constraint,
}

impl fmt::Display for ClauseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClauseKind::Objective => "objective",
            ClauseKind::Constraint => "constraint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseStatus {
    Described,
    Formulated,
    Coded,
    FormulationFlagged,
    CodeFlagged,
    Validated,
}

impl ClauseStatus {
    /// The clause lifecycle automaton.
    pub fn can_transition(self, to: ClauseStatus) -> bool {
        use ClauseStatus::*;
        matches!(
            (self, to),
            (Described, Formulated)
                | (Formulated, Coded)
                | (Coded, Validated)
                | (Coded | Validated, CodeFlagged)
                | (CodeFlagged, Coded)
                | (Formulated | Coded | Validated, FormulationFlagged)
                | (FormulationFlagged, Formulated)
        )
    }

    pub fn needs_formulation(self) -> bool {
        !matches!(self, ClauseStatus::Described)
    }

    pub fn needs_code(self) -> bool {
        matches!(self, ClauseStatus::Coded | ClauseStatus::Validated)
    }
}

impl fmt::Display for ClauseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClauseStatus::Described => "described",
            ClauseStatus::Formulated => "formulated",
            ClauseStatus::Coded => "coded",
            ClauseStatus::FormulationFlagged => "formulation_flagged",
            ClauseStatus::CodeFlagged => "code_flagged",
            ClauseStatus::Validated => "validated",
        })
    }
}

/// Solver structure attached to a clause by the technique pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructureTag {
    Sos1 { members: Vec<String> },
    Sos2 { members: Vec<String> },
    Indicator { binary: String, value: bool },
    General { function: String },
}

impl StructureTag {
    pub fn label(&self) -> String {
        match self {
            StructureTag::Sos1 { members } => format!("SOS1 over {}", members.join(", ")),
            StructureTag::Sos2 { members } => format!("SOS2 over {}", members.join(", ")),
            StructureTag::Indicator { binary, value } => {
                format!("indicator: active when {binary} = {}", u8::from(*value))
            }
            StructureTag::General { function } => format!("general constraint ({function})"),
        }
    }

    pub fn symbols(&self) -> Vec<&str> {
        match self {
            StructureTag::Sos1 { members } | StructureTag::Sos2 { members } => {
                members.iter().map(String::as_str).collect()
            }
            StructureTag::Indicator { binary, .. } => vec![binary.as_str()],
            StructureTag::General { .. } => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub id: String,
    pub kind: ClauseKind,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formulation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub status: ClauseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl Clause {
    pub fn new(id: impl Into<String>, kind: ClauseKind, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            description: description.into(),
            formulation: None,
            code: None,
            status: ClauseStatus::Described,
            structure: None,
            last_error: None,
        }
    }

    pub fn objective(description: impl Into<String>) -> Self {
        Self::new("obj", ClauseKind::Objective, description)
    }

    pub fn constraint(id: impl Into<String>, description: impl Into<String>) -> Self {
        Self::new(id, ClauseKind::Constraint, description)
    }
}

/// Anything that can be registered with [`StructuredProblem::add_entity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entity", rename_all = "snake_case")]
pub enum Entity {
    Parameter(Parameter),
    Variable(Variable),
    Clause(Clause),
}

impl From<Parameter> for Entity {
    fn from(p: Parameter) -> Self {
        Entity::Parameter(p)
    }
}

impl From<Variable> for Entity {
    fn from(v: Variable) -> Self {
        Entity::Variable(v)
    }
}

impl From<Clause> for Entity {
    fn from(c: Clause) -> Self {
        Entity::Clause(c)
    }
}

/// What a symbol names inside a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Parameter,
    Variable,
}

/// The evolving problem state the agents work on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuredProblem {
    pub background: String,
    #[serde(with = "keyed_list")]
    parameters: IndexMap<String, Parameter>,
    #[serde(with = "keyed_list")]
    variables: IndexMap<String, Variable>,
    #[serde(with = "keyed_list")]
    clauses: IndexMap<String, Clause>,
    graph: ConnectionGraph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataBundle>,
}

impl StructuredProblem {
    pub fn new(background: impl Into<String>) -> Self {
        Self {
            background: background.into(),
            ..Self::default()
        }
    }

    pub fn parameters(&self) -> impl ExactSizeIterator<Item = &Parameter> {
        self.parameters.values()
    }

    pub fn variables(&self) -> impl ExactSizeIterator<Item = &Variable> {
        self.variables.values()
    }

    pub fn clauses(&self) -> impl ExactSizeIterator<Item = &Clause> {
        self.clauses.values()
    }

    pub fn graph(&self) -> &ConnectionGraph {
        &self.graph
    }

    pub fn parameter(&self, symbol: &str) -> Option<&Parameter> {
        self.parameters.get(symbol)
    }

    pub fn variable(&self, symbol: &str) -> Option<&Variable> {
        self.variables.get(symbol)
    }

    pub fn clause(&self, id: &str) -> Option<&Clause> {
        self.clauses.get(id)
    }

    pub fn objective(&self) -> Option<&Clause> {
        self.clauses
            .values()
            .find(|c| c.kind == ClauseKind::Objective)
    }

    pub fn symbol_kind(&self, symbol: &str) -> Option<SymbolKind> {
        if self.parameters.contains_key(symbol) {
            Some(SymbolKind::Parameter)
        } else if self.variables.contains_key(symbol) {
            Some(SymbolKind::Variable)
        } else {
            None
        }
    }

    /// Next free constraint id (`c{N+1}` where N is the largest numeric suffix in use).
    pub fn next_constraint_id(&self) -> String {
        let max = self
            .clauses
            .keys()
            .filter_map(|id| id.strip_prefix('c').and_then(|n| n.parse::<usize>().ok()))
            .max()
            .unwrap_or(0);
        format!("c{}", max + 1)
    }

    pub fn add_entity(&mut self, entity: impl Into<Entity>) -> Result<(), ModelError> {
        match entity.into() {
            Entity::Parameter(p) => {
                self.check_new_symbol(&p.symbol)?;
                check_shape(&p.symbol, &p.shape)?;
                self.parameters.insert(p.symbol.clone(), p);
            }
            Entity::Variable(mut v) => {
                self.check_new_symbol(&v.symbol)?;
                check_shape(&v.symbol, &v.shape)?;
                v.status = VariableStatus::Defined;
                v.code = None;
                v.last_error = None;
                self.variables.insert(v.symbol.clone(), v);
            }
            Entity::Clause(mut c) => {
                if c.id.is_empty() || !is_valid_symbol(&c.id) {
                    return Err(ModelError::MalformedSymbol(c.id));
                }
                if self.clauses.contains_key(&c.id) {
                    return Err(ModelError::DuplicateClause(c.id));
                }
                if c.kind == ClauseKind::Objective {
                    if let Some(existing) = self.objective() {
                        return Err(ModelError::DuplicateObjective(existing.id.clone()));
                    }
                }
                c.status = ClauseStatus::Described;
                c.formulation = None;
                c.code = None;
                c.last_error = None;
                self.clauses.insert(c.id.clone(), c);
            }
        }
        Ok(())
    }

    fn check_new_symbol(&self, symbol: &str) -> Result<(), ModelError> {
        if !is_valid_symbol(symbol) {
            return Err(ModelError::MalformedSymbol(symbol.to_string()));
        }
        if self.symbol_kind(symbol).is_some() {
            return Err(ModelError::DuplicateSymbol(symbol.to_string()));
        }
        Ok(())
    }

    pub fn remove_clause(&mut self, id: &str) -> Result<Clause, ModelError> {
        let clause = self
            .clauses
            .shift_remove(id)
            .ok_or_else(|| ModelError::UnknownClause(id.to_string()))?;
        self.graph.remove_clause(id);
        Ok(clause)
    }

    pub fn remove_symbol(&mut self, symbol: &str) -> Result<(), ModelError> {
        if self.parameters.shift_remove(symbol).is_none()
            && self.variables.shift_remove(symbol).is_none()
        {
            return Err(ModelError::UnknownSymbol(symbol.to_string()));
        }
        self.graph.remove_symbol(symbol);
        Ok(())
    }

    /// Link a clause to a parameter or variable. Idempotent.
    pub fn connect(&mut self, clause_id: &str, symbol: &str) -> Result<(), ModelError> {
        if !self.clauses.contains_key(clause_id) {
            return Err(ModelError::UnknownClause(clause_id.to_string()));
        }
        match self.symbol_kind(symbol) {
            Some(SymbolKind::Parameter) => self.graph.link_parameter(clause_id, symbol),
            Some(SymbolKind::Variable) => self.graph.link_variable(clause_id, symbol),
            None => return Err(ModelError::UnknownSymbol(symbol.to_string())),
        }
        Ok(())
    }

    /// Replace all edges of a clause with exactly `symbols`. Atomic: nothing
    /// changes when a symbol is unknown.
    pub fn set_links<S: AsRef<str>>(
        &mut self,
        clause_id: &str,
        symbols: &[S],
    ) -> Result<(), ModelError> {
        if !self.clauses.contains_key(clause_id) {
            return Err(ModelError::UnknownClause(clause_id.to_string()));
        }
        if let Some(bad) = symbols
            .iter()
            .find(|s| self.symbol_kind(s.as_ref()).is_none())
        {
            return Err(ModelError::UnknownSymbol(bad.as_ref().to_string()));
        }
        self.graph.remove_clause(clause_id);
        for s in symbols {
            self.connect(clause_id, s.as_ref())?;
        }
        Ok(())
    }

    pub fn set_formulation(
        &mut self,
        clause_id: &str,
        formulation: String,
    ) -> Result<(), ModelError> {
        self.clause_mut(clause_id)?.formulation = Some(formulation);
        Ok(())
    }

    pub fn set_clause_code(&mut self, clause_id: &str, code: String) -> Result<(), ModelError> {
        self.clause_mut(clause_id)?.code = Some(code);
        Ok(())
    }

    pub fn set_variable_code(&mut self, symbol: &str, code: String) -> Result<(), ModelError> {
        self.variable_mut(symbol)?.code = Some(code);
        Ok(())
    }

    pub fn set_structure(
        &mut self,
        clause_id: &str,
        tag: Option<StructureTag>,
    ) -> Result<(), ModelError> {
        self.clause_mut(clause_id)?.structure = tag;
        Ok(())
    }

    pub fn set_error(
        &mut self,
        entity: &EntityRef,
        error: Option<String>,
    ) -> Result<(), ModelError> {
        match entity {
            EntityRef::Clause(id) => self.clause_mut(id)?.last_error = error,
            EntityRef::Variable(s) => self.variable_mut(s)?.last_error = error,
        }
        Ok(())
    }

    pub fn transition_clause(
        &mut self,
        clause_id: &str,
        to: ClauseStatus,
    ) -> Result<(), ModelError> {
        let clause = self.clause_mut(clause_id)?;
        if !clause.status.can_transition(to) {
            return Err(ModelError::IllegalTransition {
                entity: clause_id.to_string(),
                from: clause.status.to_string(),
                to: to.to_string(),
            });
        }
        if to.needs_formulation() && clause.formulation.as_deref().map_or(true, str::is_empty) {
            return Err(ModelError::MissingField {
                entity: clause_id.to_string(),
                status: to.to_string(),
                missing: "a formulation",
            });
        }
        if to.needs_code() && clause.code.as_deref().map_or(true, str::is_empty) {
            return Err(ModelError::MissingField {
                entity: clause_id.to_string(),
                status: to.to_string(),
                missing: "code",
            });
        }
        clause.status = to;
        Ok(())
    }

    pub fn transition_variable(
        &mut self,
        symbol: &str,
        to: VariableStatus,
    ) -> Result<(), ModelError> {
        let var = self.variable_mut(symbol)?;
        if !var.status.can_transition(to) {
            return Err(ModelError::IllegalTransition {
                entity: symbol.to_string(),
                from: var.status.to_string(),
                to: to.to_string(),
            });
        }
        if to != VariableStatus::Defined && var.code.as_deref().map_or(true, str::is_empty) {
            return Err(ModelError::MissingField {
                entity: symbol.to_string(),
                status: to.to_string(),
                missing: "code",
            });
        }
        var.status = to;
        Ok(())
    }

    fn clause_mut(&mut self, id: &str) -> Result<&mut Clause, ModelError> {
        self.clauses
            .get_mut(id)
            .ok_or_else(|| ModelError::UnknownClause(id.to_string()))
    }

    fn variable_mut(&mut self, symbol: &str) -> Result<&mut Variable, ModelError> {
        self.variables
            .get_mut(symbol)
            .ok_or_else(|| ModelError::UnknownSymbol(symbol.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Serializes an `IndexMap<String, T>` as a plain JSON list of `T`, keyed on
/// load by the entity's own symbol or id.
mod keyed_list {
    use indexmap::IndexMap;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub trait Keyed {
        fn key(&self) -> &str;
    }

    impl Keyed for super::Parameter {
        fn key(&self) -> &str {
            &self.symbol
        }
    }

    impl Keyed for super::Variable {
        fn key(&self) -> &str {
            &self.symbol
        }
    }

    impl Keyed for super::Clause {
        fn key(&self) -> &str {
            &self.id
        }
    }

    pub fn serialize<S, T>(map: &IndexMap<String, T>, ser: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        T: Serialize,
    {
        ser.collect_seq(map.values())
    }

    pub fn deserialize<'de, D, T>(de: D) -> Result<IndexMap<String, T>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de> + Keyed,
    {
        let items = Vec::<T>::deserialize(de)?;
        let mut map = IndexMap::with_capacity(items.len());
        for item in items {
            let key = item.key().to_string();
            if map.insert(key.clone(), item).is_some() {
                return Err(D::Error::custom(format!("duplicate entry `{key}`")));
            }
        }
        Ok(map)
    }
}
