use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    Clause, ClauseStatus, ModelError, StructureTag, StructuredProblem, Variable, VariableStatus,
};

/// A clause id or a variable symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum EntityRef {
    Clause(String),
    Variable(String),
}

impl EntityRef {
    pub fn id(&self) -> &str {
        match self {
            EntityRef::Clause(s) | EntityRef::Variable(s) => s,
        }
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A single change to a [`StructuredProblem`]. Agents mutate the problem only
/// through these, so a run can be replayed from its event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    AddVariable {
        variable: Variable,
    },
    AddClause {
        clause: Clause,
    },
    SetFormulation {
        clause: String,
        formulation: String,
    },
    SetLinks {
        clause: String,
        symbols: Vec<String>,
    },
    SetClauseCode {
        clause: String,
        code: String,
    },
    SetVariableCode {
        symbol: String,
        code: String,
    },
    ClauseStatus {
        clause: String,
        from: ClauseStatus,
        to: ClauseStatus,
    },
    VariableStatus {
        symbol: String,
        from: VariableStatus,
        to: VariableStatus,
    },
    SetError {
        entity: EntityRef,
        error: Option<String>,
    },
    SetStructure {
        clause: String,
        tag: Option<StructureTag>,
    },
}

impl Mutation {
    /// Entity touched by the mutation.
    pub fn entity(&self) -> EntityRef {
        match self {
            Mutation::AddVariable { variable } => EntityRef::Variable(variable.symbol.clone()),
            Mutation::AddClause { clause } => EntityRef::Clause(clause.id.clone()),
            Mutation::SetFormulation { clause, .. }
            | Mutation::SetLinks { clause, .. }
            | Mutation::SetClauseCode { clause, .. }
            | Mutation::ClauseStatus { clause, .. }
            | Mutation::SetStructure { clause, .. } => EntityRef::Clause(clause.clone()),
            Mutation::SetVariableCode { symbol, .. } | Mutation::VariableStatus { symbol, .. } => {
                EntityRef::Variable(symbol.clone())
            }
            Mutation::SetError { entity, .. } => entity.clone(),
        }
    }
}

impl StructuredProblem {
    /// Apply one mutation, enforcing the same rules as the direct methods.
    /// Status mutations also check that `from` matches the current status.
    pub fn apply(&mut self, m: &Mutation) -> Result<(), ModelError> {
        match m {
            Mutation::AddVariable { variable } => self.add_entity(variable.clone()),
            Mutation::AddClause { clause } => self.add_entity(clause.clone()),
            Mutation::SetFormulation {
                clause,
                formulation,
            } => self.set_formulation(clause, formulation.clone()),
            Mutation::SetLinks { clause, symbols } => self.set_links(clause, symbols),
            Mutation::SetClauseCode { clause, code } => self.set_clause_code(clause, code.clone()),
            Mutation::SetVariableCode { symbol, code } => {
                self.set_variable_code(symbol, code.clone())
            }
            Mutation::ClauseStatus { clause, from, to } => {
                let current = self
                    .clause(clause)
                    .ok_or_else(|| ModelError::UnknownClause(clause.clone()))?
                    .status;
                if current != *from {
                    return Err(ModelError::IllegalTransition {
                        entity: clause.clone(),
                        from: current.to_string(),
                        to: to.to_string(),
                    });
                }
                self.transition_clause(clause, *to)
            }
            Mutation::VariableStatus { symbol, from, to } => {
                let current = self
                    .variable(symbol)
                    .ok_or_else(|| ModelError::UnknownSymbol(symbol.clone()))?
                    .status;
                if current != *from {
                    return Err(ModelError::IllegalTransition {
                        entity: symbol.clone(),
                        from: current.to_string(),
                        to: to.to_string(),
                    });
                }
                self.transition_variable(symbol, *to)
            }
            Mutation::SetError { entity, error } => self.set_error(entity, error.clone()),
            Mutation::SetStructure { clause, tag } => self.set_structure(clause, tag.clone()),
        }
    }
}
