use serde::{Deserialize, Serialize};

use super::Pos;
use crate::model::Domain;

/// `i in Dim` or `i in 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Binder {
    pub index: String,
    pub set: SetRef,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetRef {
    Dim(String),
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum IndexExpr {
    Var(String),
    Lit(usize),
    Offset(String, i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ref {
    pub name: String,
    pub indices: Vec<IndexExpr>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ref(Ref),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>, Pos),
    Div(Box<Expr>, Box<Expr>, Pos),
    Sum(Vec<Binder>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SosKind {
    Sos1,
    Sos2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Indicator {
    pub var: Ref,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub binders: Vec<Binder>,
    pub lower: Option<Expr>,
    pub upper: Option<Expr>,
    pub domain: Option<Domain>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintBody {
    Linear {
        indicator: Option<Indicator>,
        lhs: Expr,
        cmp: Cmp,
        rhs: Expr,
    },
    Sos {
        kind: SosKind,
        binders: Vec<Binder>,
        member: Ref,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Var(VarDecl),
    Objective {
        sense: ObjSense,
        expr: Expr,
        pos: Pos,
    },
    Constraint {
        quantifiers: Vec<Binder>,
        body: ConstraintBody,
        pos: Pos,
    },
}

/// Solver structure carried by a statement, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Sos1,
    Sos2,
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatementKind {
    Variable,
    Objective,
    Constraint,
}

impl Statement {
    pub fn kind(&self) -> StatementKind {
        match self {
            Statement::Var(_) => StatementKind::Variable,
            Statement::Objective { .. } => StatementKind::Objective,
            Statement::Constraint { .. } => StatementKind::Constraint,
        }
    }

    pub fn quantifiers(&self) -> &[Binder] {
        match self {
            Statement::Constraint { quantifiers, .. } => quantifiers,
            Statement::Var(v) => &v.binders,
            Statement::Objective { .. } => &[],
        }
    }

    pub fn structure(&self) -> Option<StructureKind> {
        match self {
            Statement::Constraint {
                body: ConstraintBody::Sos { kind, .. },
                ..
            } => Some(match kind {
                SosKind::Sos1 => StructureKind::Sos1,
                SosKind::Sos2 => StructureKind::Sos2,
            }),
            Statement::Constraint {
                body:
                    ConstraintBody::Linear {
                        indicator: Some(_), ..
                    },
                ..
            } => Some(StructureKind::Indicator),
            _ => None,
        }
    }

    pub fn pos(&self) -> Pos {
        match self {
            Statement::Var(v) => v.pos,
            Statement::Objective { pos, .. } | Statement::Constraint { pos, .. } => *pos,
        }
    }
}
