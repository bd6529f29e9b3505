use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{AmdlError, ErrorKind, Pos};
use crate::model::Domain;

const KEYWORDS: &[&str] = &[
    "var",
    "in",
    "forall",
    "sum",
    "minimize",
    "maximize",
    "integer",
    "binary",
    "continuous",
    "sos1",
    "sos2",
];

pub struct Parser {
    toks: Vec<Token>,
    at: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, AmdlError> {
        Ok(Self {
            toks: tokenize(src)?,
            at: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.at + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at < self.toks.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: impl Into<String>) -> AmdlError {
        let t = self.peek();
        AmdlError {
            pos: t.pos,
            kind: ErrorKind::Syntax {
                expected: expected.into(),
                found: t.tok.describe(),
            },
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Pos, AmdlError> {
        if self.peek().tok == tok {
            Ok(self.bump().pos)
        } else {
            Err(self.error(tok.describe()))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Pos, AmdlError> {
        if self.is_kw(kw) {
            Ok(self.bump().pos)
        } else {
            Err(self.error(format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), AmdlError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                let pos = self.bump().pos;
                Ok((s, pos))
            }
            _ => Err(self.error(what)),
        }
    }

    pub fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    pub fn expect_eof(&mut self) -> Result<(), AmdlError> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.error("end of snippet (exactly one statement expected)"))
        }
    }

    pub fn statement(&mut self) -> Result<Statement, AmdlError> {
        let pos = self.peek().pos;
        let stmt = if self.is_kw("var") {
            Statement::Var(self.var_decl()?)
        } else if self.is_kw("minimize") || self.is_kw("maximize") {
            let sense = if self.is_kw("minimize") {
                ObjSense::Minimize
            } else {
                ObjSense::Maximize
            };
            self.bump();
            self.expect(Tok::Colon)?;
            let expr = self.expr()?;
            Statement::Objective { sense, expr, pos }
        } else {
            let mut quantifiers = Vec::new();
            if self.is_kw("forall") {
                self.bump();
                self.expect(Tok::LParen)?;
                quantifiers = self.binders()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Colon)?;
            }
            let body = self.constraint_body()?;
            Statement::Constraint {
                quantifiers,
                body,
                pos,
            }
        };
        self.expect(Tok::Semi)?;
        Ok(stmt)
    }

    fn var_decl(&mut self) -> Result<VarDecl, AmdlError> {
        let pos = self.expect_kw("var")?;
        let (name, _) = self.ident("a variable name")?;
        let mut binders = Vec::new();
        if self.peek().tok == Tok::LBrace {
            self.bump();
            binders = self.binders()?;
            self.expect(Tok::RBrace)?;
        }
        let (mut lower, mut upper) = (None, None);
        loop {
            match self.peek().tok {
                Tok::Ge if lower.is_none() => {
                    self.bump();
                    lower = Some(self.expr()?);
                }
                Tok::Le if upper.is_none() => {
                    self.bump();
                    upper = Some(self.expr()?);
                }
                _ => break,
            }
        }
        let mut domain = None;
        let had_comma = if self.peek().tok == Tok::Comma {
            self.bump();
            true
        } else {
            false
        };
        for (kw, d) in [
            ("integer", Domain::Integer),
            ("binary", Domain::Binary),
            ("continuous", Domain::Continuous),
        ] {
            if self.is_kw(kw) {
                self.bump();
                domain = Some(d);
                break;
            }
        }
        if had_comma && domain.is_none() {
            return Err(self.error("`integer`, `binary` or `continuous`"));
        }
        Ok(VarDecl {
            name,
            binders,
            lower,
            upper,
            domain,
            pos,
        })
    }

    fn binders(&mut self) -> Result<Vec<Binder>, AmdlError> {
        let mut out = vec![self.binder()?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            out.push(self.binder()?);
        }
        Ok(out)
    }

    fn binder(&mut self) -> Result<Binder, AmdlError> {
        let (index, pos) = self.ident("an index name")?;
        self.expect_kw("in")?;
        let set = match self.peek().tok.clone() {
            Tok::Number(n) if n.fract() == 0.0 && n >= 1.0 => {
                self.bump();
                SetRef::Count(n as usize)
            }
            _ => SetRef::Dim(self.ident("a dimension name or positive integer")?.0),
        };
        Ok(Binder { index, set, pos })
    }

    fn constraint_body(&mut self) -> Result<ConstraintBody, AmdlError> {
        if (self.is_kw("sos1") || self.is_kw("sos2")) && *self.peek_at(1) == Tok::LParen {
            let kind = if self.is_kw("sos1") {
                SosKind::Sos1
            } else {
                SosKind::Sos2
            };
            self.bump();
            self.expect(Tok::LParen)?;
            let binders = self.binders()?;
            self.expect(Tok::RParen)?;
            self.expect(Tok::Colon)?;
            let member = self.reference()?;
            return Ok(ConstraintBody::Sos {
                kind,
                binders,
                member,
            });
        }

        let (lhs, cmp, rhs) = self.comparison()?;
        if self.peek().tok != Tok::Arrow {
            return Ok(ConstraintBody::Linear {
                indicator: None,
                lhs,
                cmp,
                rhs,
            });
        }
        let arrow = self.bump();
        let indicator = match (lhs, cmp, rhs) {
            (Expr::Ref(var), Cmp::Eq, Expr::Num(v)) if v == 0.0 || v == 1.0 => Indicator {
                var,
                value: v == 1.0,
            },
            _ => return Err(AmdlError {
                pos: arrow.pos,
                kind: ErrorKind::Syntax {
                    expected:
                        "an indicator condition of the form `b[i] = 0` or `b[i] = 1` before `->`"
                            .into(),
                    found: "`->`".into(),
                },
            }),
        };
        let (lhs, cmp, rhs) = self.comparison()?;
        Ok(ConstraintBody::Linear {
            indicator: Some(indicator),
            lhs,
            cmp,
            rhs,
        })
    }

    fn comparison(&mut self) -> Result<(Expr, Cmp, Expr), AmdlError> {
        let lhs = self.expr()?;
        let cmp = match self.peek().tok {
            Tok::Le => Cmp::Le,
            Tok::Ge => Cmp::Ge,
            Tok::Eq => Cmp::Eq,
            _ => return Err(self.error("`<=`, `>=` or `=`")),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok((lhs, cmp, rhs))
    }

    pub fn expr(&mut self) -> Result<Expr, AmdlError> {
        let mut acc = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, AmdlError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    let pos = self.bump().pos;
                    acc = Expr::Mul(Box::new(acc), Box::new(self.unary()?), pos);
                }
                Tok::Slash => {
                    let pos = self.bump().pos;
                    acc = Expr::Div(Box::new(acc), Box::new(self.unary()?), pos);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, AmdlError> {
        match self.peek().tok {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, AmdlError> {
        match self.peek().tok.clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::Num(n))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) if s == "sum" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let binders = self.binders()?;
                self.expect(Tok::RParen)?;
                let body = self.term()?;
                Ok(Expr::Sum(binders, Box::new(body)))
            }
            Tok::Ident(_) => Ok(Expr::Ref(self.reference()?)),
            _ => Err(self.error("a number, name, `sum` or `(`")),
        }
    }

    fn reference(&mut self) -> Result<Ref, AmdlError> {
        let (name, pos) = self.ident("a parameter or variable name")?;
        let mut indices = Vec::new();
        if self.peek().tok == Tok::LBracket {
            self.bump();
            indices.push(self.index()?);
            while self.peek().tok == Tok::Comma {
                self.bump();
                indices.push(self.index()?);
            }
            self.expect(Tok::RBracket)?;
        }
        Ok(Ref { name, indices, pos })
    }

    fn index(&mut self) -> Result<IndexExpr, AmdlError> {
        match self.peek().tok.clone() {
            Tok::Number(n) if n.fract() == 0.0 && n >= 0.0 => {
                self.bump();
                Ok(IndexExpr::Lit(n as usize))
            }
            Tok::Ident(_) => {
                let (name, _) = self.ident("an index name")?;
                let sign = match self.peek().tok {
                    Tok::Plus => 1,
                    Tok::Minus => -1,
                    _ => return Ok(IndexExpr::Var(name)),
                };
                self.bump();
                match self.peek().tok {
                    Tok::Number(n) if n.fract() == 0.0 && n >= 0.0 => {
                        self.bump();
                        Ok(IndexExpr::Offset(name, sign * n as i64))
                    }
                    _ => Err(self.error("an integer offset")),
                }
            }
            _ => Err(self.error("an index (name, non-negative integer, or name +/- integer)")),
        }
    }
}
