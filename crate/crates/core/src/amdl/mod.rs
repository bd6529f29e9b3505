//! AMDL: a small indexed linear modeling language used as the default code
//! target. Snippets are parsed, expanded against a [`DataBundle`] into a
//! [`FlatModel`], written out as an LP file for an external solver, and the
//! solver's answer is read back. An exhaustive oracle solves tiny models for
//! ground truth.
//!
//! The grammar is documented in `docs/amdl.md`.

pub mod ast;
mod check;
mod expand;
mod flat;
mod lexer;
pub mod lp;
mod oracle;
mod parser;
mod solution;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use ast::{Cmp, ObjSense, SosKind, Statement, StatementKind, StructureKind};
pub use expand::{expand, ExpandError, ExpandErrorKind, ProgramItem};
pub use flat::{
    check, check_with_tol, CheckReport, FlatModel, FlatRow, FlatVar, IndicatorLink, SosGroup,
    FEASIBILITY_TOL, ORACLE_TOL,
};
pub use lp::{emit_lp, parse_lp, LpError};
pub use oracle::{
    oracle_solve, OracleError, OracleOutcome, MAX_LATTICE_POINTS, MAX_VERTEX_ROWS, MAX_VERTEX_VARS,
};
pub use solution::{
    detect_dialect, parse_solution, Solution, SolutionDialect, SolutionError, SolveStatus,
};

use crate::model::DataBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ErrorKind {
    #[error("syntax error: expected {expected}, found {found}")]
    Syntax { expected: String, found: String },
    #[error("nonlinear term: two variable references multiplied")]
    NonlinearTerm,
    #[error("index `{0}` is not bound by an enclosing forall or sum")]
    UnboundIndex(String),
    #[error("`{0}` must be a variable here")]
    NotAVariable(String),
    #[error("{0}")]
    Semantic(String),
}

/// A parse or check failure, always positioned.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{pos}: {kind}")]
pub struct AmdlError {
    pub pos: Pos,
    pub kind: ErrorKind,
}

impl AmdlError {
    pub fn new(pos: Pos, kind: ErrorKind) -> Self {
        Self { pos, kind }
    }

    pub fn line(&self) -> usize {
        self.pos.line
    }

    pub fn col(&self) -> usize {
        self.pos.col
    }
}

/// Parse exactly one statement. `variables` lists the names that denote
/// decision variables (everything else is a parameter or index), which the
/// linearity check needs.
pub fn parse_amdl<S: AsRef<str>>(src: &str, variables: &[S]) -> Result<Statement, AmdlError> {
    let mut p = parser::Parser::new(src)?;
    let stmt = p.statement()?;
    p.expect_eof()?;
    let own = match &stmt {
        Statement::Var(v) => Some(v.name.as_str()),
        _ => None,
    };
    let is_var = |n: &str| own == Some(n) || variables.iter().any(|v| v.as_ref() == n);
    check::check_statement(&stmt, &is_var)?;
    Ok(stmt)
}

/// Parse a whole model file: any number of statements. Variables declared
/// anywhere in the file count as variables everywhere.
pub fn parse_program(src: &str) -> Result<Vec<Statement>, AmdlError> {
    let mut p = parser::Parser::new(src)?;
    let mut stmts = Vec::new();
    while !p.at_eof() {
        stmts.push(p.statement()?);
    }
    let vars: Vec<String> = stmts
        .iter()
        .filter_map(|s| match s {
            Statement::Var(v) => Some(v.name.clone()),
            _ => None,
        })
        .collect();
    let is_var = |n: &str| vars.iter().any(|v| v == n);
    for s in &stmts {
        check::check_statement(s, &is_var)?;
    }
    Ok(stmts)
}

/// Parse and expand a model file in one step; statements are attributed to
/// `s1`, `s2`, ... in file order.
pub fn compile_program(src: &str, data: &DataBundle) -> Result<FlatModel, String> {
    let stmts = parse_program(src).map_err(|e| e.to_string())?;
    let items: Vec<ProgramItem> = stmts
        .into_iter()
        .enumerate()
        .map(|(i, statement)| ProgramItem {
            origin: format!("s{}", i + 1),
            statement,
        })
        .collect();
    expand(&items, data).map_err(|e| e.to_string())
}
