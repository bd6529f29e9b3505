//! Semantic checks run after parsing: linearity first, then index scoping.

use super::ast::*;
use super::{AmdlError, ErrorKind, Pos};

/// Degree of `expr` in the decision variables, or the position of the first
/// nonlinear product.
fn degree(expr: &Expr, is_var: &dyn Fn(&str) -> bool) -> Result<u32, AmdlError> {
    Ok(match expr {
        Expr::Num(_) => 0,
        Expr::Ref(r) => u32::from(is_var(&r.name)),
        Expr::Neg(e) => degree(e, is_var)?,
        Expr::Add(a, b) | Expr::Sub(a, b) => degree(a, is_var)?.max(degree(b, is_var)?),
        Expr::Mul(a, b, pos) => {
            let d = degree(a, is_var)? + degree(b, is_var)?;
            if d > 1 {
                return Err(AmdlError::new(*pos, ErrorKind::NonlinearTerm));
            }
            d
        }
        Expr::Div(a, b, pos) => {
            if degree(b, is_var)? > 0 {
                return Err(AmdlError::new(*pos, ErrorKind::NonlinearTerm));
            }
            degree(a, is_var)?
        }
        Expr::Sum(_, body) => degree(body, is_var)?,
    })
}

fn require_constant(expr: &Expr, is_var: &dyn Fn(&str) -> bool, pos: Pos) -> Result<(), AmdlError> {
    if degree(expr, is_var)? > 0 {
        return Err(AmdlError::new(
            pos,
            ErrorKind::Semantic("bounds must not reference variables".into()),
        ));
    }
    Ok(())
}

fn require_variable(r: &Ref, is_var: &dyn Fn(&str) -> bool) -> Result<(), AmdlError> {
    if is_var(&r.name) {
        Ok(())
    } else {
        Err(AmdlError::new(
            r.pos,
            ErrorKind::NotAVariable(r.name.clone()),
        ))
    }
}

fn check_linearity(stmt: &Statement, is_var: &dyn Fn(&str) -> bool) -> Result<(), AmdlError> {
    match stmt {
        Statement::Var(v) => {
            for e in v.lower.iter().chain(v.upper.iter()) {
                require_constant(e, is_var, v.pos)?;
            }
        }
        Statement::Objective { expr, .. } => {
            degree(expr, is_var)?;
        }
        Statement::Constraint { body, .. } => match body {
            ConstraintBody::Linear {
                indicator,
                lhs,
                rhs,
                ..
            } => {
                degree(lhs, is_var)?;
                degree(rhs, is_var)?;
                if let Some(ind) = indicator {
                    require_variable(&ind.var, is_var)?;
                }
            }
            ConstraintBody::Sos { member, .. } => require_variable(member, is_var)?,
        },
    }
    Ok(())
}

struct Scope<'a> {
    names: Vec<&'a str>,
}

impl<'a> Scope<'a> {
    fn with<T>(
        &mut self,
        binders: &'a [Binder],
        f: impl FnOnce(&mut Self) -> Result<T, AmdlError>,
    ) -> Result<T, AmdlError> {
        let n = self.names.len();
        self.names.extend(binders.iter().map(|b| b.index.as_str()));
        let out = f(self);
        self.names.truncate(n);
        out
    }

    fn check_ref(&self, r: &Ref) -> Result<(), AmdlError> {
        for idx in &r.indices {
            let name = match idx {
                IndexExpr::Var(n) | IndexExpr::Offset(n, _) => n,
                IndexExpr::Lit(_) => continue,
            };
            if !self.names.contains(&name.as_str()) {
                return Err(AmdlError::new(r.pos, ErrorKind::UnboundIndex(name.clone())));
            }
        }
        Ok(())
    }

    fn check_expr(&mut self, e: &'a Expr) -> Result<(), AmdlError> {
        match e {
            Expr::Num(_) => Ok(()),
            Expr::Ref(r) => self.check_ref(r),
            Expr::Neg(a) => self.check_expr(a),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b, _) | Expr::Div(a, b, _) => {
                self.check_expr(a)?;
                self.check_expr(b)
            }
            Expr::Sum(binders, body) => self.with(binders, |s| s.check_expr(body)),
        }
    }
}

fn check_scoping(stmt: &Statement) -> Result<(), AmdlError> {
    let mut scope = Scope { names: Vec::new() };
    match stmt {
        Statement::Var(v) => scope.with(&v.binders, |s| {
            for e in v.lower.iter().chain(v.upper.iter()) {
                s.check_expr(e)?;
            }
            Ok(())
        }),
        Statement::Objective { expr, .. } => scope.check_expr(expr),
        Statement::Constraint {
            quantifiers, body, ..
        } => scope.with(quantifiers, |s| match body {
            ConstraintBody::Linear {
                indicator,
                lhs,
                rhs,
                ..
            } => {
                if let Some(ind) = indicator {
                    s.check_ref(&ind.var)?;
                }
                s.check_expr(lhs)?;
                s.check_expr(rhs)
            }
            ConstraintBody::Sos {
                binders, member, ..
            } => s.with(binders, |s| s.check_ref(member)),
        }),
    }
}

pub fn check_statement(stmt: &Statement, is_var: &dyn Fn(&str) -> bool) -> Result<(), AmdlError> {
    check_linearity(stmt, is_var)?;
    check_scoping(stmt)
}
