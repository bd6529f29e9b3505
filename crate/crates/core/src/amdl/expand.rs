//! Expansion of parsed statements against a data bundle into a flat model.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use super::ast::*;
use super::flat::{FlatModel, FlatRow, FlatVar, IndicatorLink, SosGroup};
use super::Pos;
use crate::model::{DataBundle, Domain};

/// Default upper bound for integer variables declared without one.
pub const DEFAULT_INTEGER_UPPER: f64 = 1e9;

/// A statement together with the entity it came from (clause id or variable
/// symbol). Expansion errors are attributed to that origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramItem {
    pub origin: String,
    pub statement: Statement,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpandErrorKind {
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("dimension `{0}` is not bound in the data")]
    UnboundDimension(String),
    #[error("`{name}` takes {expected} index(es), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("index {index} out of range for `{name}` (size {size})")]
    IndexOutOfRange {
        name: String,
        index: i64,
        size: usize,
    },
    #[error("data for `{0}` does not cover the referenced entry")]
    MissingData(String),
    #[error("nonlinear term")]
    NonlinearTerm,
    #[error("division by zero")]
    DivisionByZero,
    #[error("`{0}` must be a variable here")]
    NotAVariable(String),
    #[error("variable bounds must be constant")]
    NonConstantBound,
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("variable `{0}` has an empty domain (lower bound above upper bound)")]
    EmptyBounds(String),
    #[error("the model has no objective")]
    MissingObjective,
    #[error("the model has more than one objective")]
    DuplicateObjective,
    #[error("unrepresentable structure: {0}")]
    UnrepresentableStructure(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{origin}{}: {kind}", pos.map(|p| format!(" at {p}")).unwrap_or_default())]
pub struct ExpandError {
    /// Origin of the offending statement; empty for whole-model problems.
    pub origin: String,
    pub pos: Option<Pos>,
    pub kind: ExpandErrorKind,
}

#[derive(Debug, Default, Clone)]
struct Lin {
    terms: BTreeMap<usize, f64>,
    constant: f64,
}

impl Lin {
    fn constant(c: f64) -> Self {
        Lin {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    fn is_constant(&self) -> bool {
        self.terms.values().all(|&c| c == 0.0)
    }

    fn scale(mut self, k: f64) -> Self {
        self.constant *= k;
        for c in self.terms.values_mut() {
            *c *= k;
        }
        self
    }

    fn add(mut self, other: Lin, sign: f64) -> Self {
        self.constant += sign * other.constant;
        for (j, c) in other.terms {
            *self.terms.entry(j).or_insert(0.0) += sign * c;
        }
        self
    }

    fn into_terms(self) -> Vec<(usize, f64)> {
        self.terms.into_iter().filter(|&(_, c)| c != 0.0).collect()
    }
}

struct Family {
    start: usize,
    sizes: Vec<usize>,
}

struct Expander<'a> {
    data: &'a DataBundle,
    families: HashMap<String, Family>,
    model: FlatModel,
    origin: String,
}

type Env = Vec<(String, usize)>;

fn lookup(env: &Env, name: &str) -> Option<usize> {
    env.iter().rev().find(|(n, _)| n == name).map(|&(_, v)| v)
}

impl<'a> Expander<'a> {
    fn err(&self, pos: Pos, kind: ExpandErrorKind) -> ExpandError {
        ExpandError {
            origin: self.origin.clone(),
            pos: Some(pos),
            kind,
        }
    }

    fn set_size(&self, set: &SetRef, pos: Pos) -> Result<usize, ExpandError> {
        match set {
            SetRef::Count(n) => Ok(*n),
            SetRef::Dim(d) => self
                .data
                .dimensions
                .get(d)
                .copied()
                .ok_or_else(|| self.err(pos, ExpandErrorKind::UnboundDimension(d.clone()))),
        }
    }

    /// Every assignment of the binders, in row-major order.
    fn assignments(&self, binders: &[Binder]) -> Result<Vec<Vec<usize>>, ExpandError> {
        let sizes = binders
            .iter()
            .map(|b| self.set_size(&b.set, b.pos))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(cartesian(&sizes))
    }

    fn bind(env: &Env, binders: &[Binder], values: &[usize]) -> Env {
        let mut e = env.clone();
        e.extend(
            binders
                .iter()
                .zip(values)
                .map(|(b, &v)| (b.index.clone(), v)),
        );
        e
    }

    fn indices(&self, r: &Ref, env: &Env, sizes: &[usize]) -> Result<Vec<usize>, ExpandError> {
        if r.indices.len() != sizes.len() {
            return Err(self.err(
                r.pos,
                ExpandErrorKind::Arity {
                    name: r.name.clone(),
                    expected: sizes.len(),
                    found: r.indices.len(),
                },
            ));
        }
        r.indices
            .iter()
            .zip(sizes)
            .map(|(ix, &size)| {
                let value: i64 = match ix {
                    IndexExpr::Lit(k) => *k as i64,
                    IndexExpr::Var(n) | IndexExpr::Offset(n, _) => {
                        let base = lookup(env, n).ok_or_else(|| {
                            self.err(r.pos, ExpandErrorKind::UnknownSymbol(n.clone()))
                        })? as i64;
                        match ix {
                            IndexExpr::Offset(_, d) => base + d,
                            _ => base,
                        }
                    }
                };
                if value < 0 || value as usize >= size {
                    return Err(self.err(
                        r.pos,
                        ExpandErrorKind::IndexOutOfRange {
                            name: r.name.clone(),
                            index: value,
                            size,
                        },
                    ));
                }
                Ok(value as usize)
            })
            .collect()
    }

    fn var_ref(&self, r: &Ref, env: &Env) -> Result<usize, ExpandError> {
        let fam = self
            .families
            .get(&r.name)
            .ok_or_else(|| self.err(r.pos, ExpandErrorKind::NotAVariable(r.name.clone())))?;
        let idx = self.indices(r, env, &fam.sizes)?;
        let mut flat = 0;
        for (i, s) in idx.iter().zip(&fam.sizes) {
            flat = flat * s + i;
        }
        Ok(fam.start + flat)
    }

    fn eval(&self, e: &Expr, env: &Env) -> Result<Lin, ExpandError> {
        Ok(match e {
            Expr::Num(n) => Lin::constant(*n),
            Expr::Ref(r) => {
                if self.families.contains_key(&r.name) {
                    let j = self.var_ref(r, env)?;
                    let mut l = Lin::default();
                    l.terms.insert(j, 1.0);
                    l
                } else if let Some(value) = self.data.values.get(&r.name) {
                    let depth = value.depth();
                    let sizes = shape_of(value, depth);
                    let idx = self.indices(r, env, &sizes)?;
                    let v = value.get(&idx).ok_or_else(|| {
                        self.err(r.pos, ExpandErrorKind::MissingData(r.name.clone()))
                    })?;
                    Lin::constant(v)
                } else if let (Some(v), true) = (lookup(env, &r.name), r.indices.is_empty()) {
                    Lin::constant(v as f64)
                } else if let (Some(&n), true) =
                    (self.data.dimensions.get(&r.name), r.indices.is_empty())
                {
                    Lin::constant(n as f64)
                } else {
                    return Err(self.err(r.pos, ExpandErrorKind::UnknownSymbol(r.name.clone())));
                }
            }
            Expr::Neg(a) => self.eval(a, env)?.scale(-1.0),
            Expr::Add(a, b) => self.eval(a, env)?.add(self.eval(b, env)?, 1.0),
            Expr::Sub(a, b) => self.eval(a, env)?.add(self.eval(b, env)?, -1.0),
            Expr::Mul(a, b, pos) => {
                let (x, y) = (self.eval(a, env)?, self.eval(b, env)?);
                if x.is_constant() {
                    y.scale(x.constant)
                } else if y.is_constant() {
                    x.scale(y.constant)
                } else {
                    return Err(self.err(*pos, ExpandErrorKind::NonlinearTerm));
                }
            }
            Expr::Div(a, b, pos) => {
                let (x, y) = (self.eval(a, env)?, self.eval(b, env)?);
                if !y.is_constant() {
                    return Err(self.err(*pos, ExpandErrorKind::NonlinearTerm));
                }
                if y.constant == 0.0 {
                    return Err(self.err(*pos, ExpandErrorKind::DivisionByZero));
                }
                x.scale(1.0 / y.constant)
            }
            Expr::Sum(binders, body) => {
                let mut acc = Lin::default();
                for values in self.assignments(binders)? {
                    acc = acc.add(self.eval(body, &Self::bind(env, binders, &values))?, 1.0);
                }
                acc
            }
        })
    }

    fn constant(&self, e: &Expr, env: &Env, pos: Pos) -> Result<f64, ExpandError> {
        let l = self.eval(e, env)?;
        if !l.is_constant() {
            return Err(self.err(pos, ExpandErrorKind::NonConstantBound));
        }
        Ok(l.constant)
    }

    fn declare(&mut self, v: &VarDecl) -> Result<(), ExpandError> {
        if self.families.contains_key(&v.name) || self.data.values.contains_key(&v.name) {
            return Err(self.err(v.pos, ExpandErrorKind::DuplicateVariable(v.name.clone())));
        }
        let sizes = v
            .binders
            .iter()
            .map(|b| self.set_size(&b.set, b.pos))
            .collect::<Result<Vec<_>, _>>()?;
        let domain = v.domain.unwrap_or(Domain::Continuous);
        let (default_lo, default_hi) = match domain {
            Domain::Continuous => (0.0, f64::INFINITY),
            Domain::Integer => (0.0, DEFAULT_INTEGER_UPPER),
            Domain::Binary => (0.0, 1.0),
        };
        let start = self.model.vars.len();
        let mut new_vars = Vec::new();
        for values in cartesian(&sizes) {
            let env = Self::bind(&Vec::new(), &v.binders, &values);
            let lower = match &v.lower {
                Some(e) => self.constant(e, &env, v.pos)?,
                None => default_lo,
            };
            let upper = match &v.upper {
                Some(e) => self.constant(e, &env, v.pos)?,
                None => default_hi,
            };
            if lower > upper {
                return Err(self.err(v.pos, ExpandErrorKind::EmptyBounds(v.name.clone())));
            }
            new_vars.push(FlatVar {
                name: flat_name(&v.name, &values),
                origin: v.name.clone(),
                lower,
                upper,
                domain,
            });
        }
        let existing: HashSet<&str> = self.model.vars.iter().map(|x| x.name.as_str()).collect();
        if let Some(clash) = new_vars.iter().find(|x| existing.contains(x.name.as_str())) {
            return Err(self.err(
                v.pos,
                ExpandErrorKind::DuplicateVariable(clash.name.clone()),
            ));
        }
        self.model.vars.extend(new_vars);
        self.families
            .insert(v.name.clone(), Family { start, sizes });
        Ok(())
    }

    fn row(
        &self,
        name: String,
        lhs: &Expr,
        cmp: Cmp,
        rhs: &Expr,
        env: &Env,
    ) -> Result<FlatRow, ExpandError> {
        let diff = self.eval(lhs, env)?.add(self.eval(rhs, env)?, -1.0);
        let rhs = -diff.constant;
        Ok(FlatRow {
            name,
            origin: self.origin.clone(),
            terms: diff.into_terms(),
            cmp,
            rhs: if rhs == 0.0 { 0.0 } else { rhs },
        })
    }

    fn constraint(
        &mut self,
        quantifiers: &[Binder],
        body: &ConstraintBody,
    ) -> Result<(), ExpandError> {
        for values in self.assignments(quantifiers)? {
            let env = Self::bind(&Vec::new(), quantifiers, &values);
            let name = flat_name(&self.origin, &values);
            match body {
                ConstraintBody::Linear {
                    indicator: None,
                    lhs,
                    cmp,
                    rhs,
                } => {
                    let row = self.row(name, lhs, *cmp, rhs, &env)?;
                    self.model.rows.push(row);
                }
                ConstraintBody::Linear {
                    indicator: Some(ind),
                    lhs,
                    cmp,
                    rhs,
                } => {
                    let binary = self.var_ref(&ind.var, &env)?;
                    let var = &self.model.vars[binary];
                    if var.domain != Domain::Binary {
                        return Err(self.err(
                            ind.var.pos,
                            ExpandErrorKind::UnrepresentableStructure(format!(
                                "indicator variable `{}` is not binary",
                                var.name
                            )),
                        ));
                    }
                    let row = self.row(name, lhs, *cmp, rhs, &env)?;
                    self.model.indicators.push(IndicatorLink {
                        binary,
                        value: ind.value,
                        row,
                    });
                }
                ConstraintBody::Sos {
                    kind,
                    binders,
                    member,
                } => {
                    let mut members = Vec::new();
                    for (k, inner) in self.assignments(binders)?.into_iter().enumerate() {
                        let j = self.var_ref(member, &Self::bind(&env, binders, &inner))?;
                        if members.iter().any(|&(m, _)| m == j) {
                            return Err(self.err(
                                member.pos,
                                ExpandErrorKind::UnrepresentableStructure(format!(
                                    "variable `{}` appears twice in one set",
                                    self.model.vars[j].name
                                )),
                            ));
                        }
                        members.push((j, (k + 1) as f64));
                    }
                    self.model.sos.push(SosGroup {
                        name,
                        origin: self.origin.clone(),
                        kind: *kind,
                        members,
                    });
                }
            }
        }
        Ok(())
    }
}

fn shape_of(value: &crate::model::ParamValue, depth: usize) -> Vec<usize> {
    use crate::model::ParamValue;
    let mut sizes = Vec::with_capacity(depth);
    let mut cur = value;
    while let ParamValue::Array(items) = cur {
        sizes.push(items.len());
        match items.first() {
            Some(first) => cur = first,
            None => break,
        }
    }
    sizes
}

fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..s).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    out
}

/// `x` for scalars, `x_0_2` for indexed entries.
pub fn flat_name(base: &str, values: &[usize]) -> String {
    let mut s = base.to_string();
    for v in values {
        s.push('_');
        s.push_str(&v.to_string());
    }
    s
}

/// Expand statements into a flat model. Variable declarations are processed
/// first (in order), then the objective and constraints in order; the first
/// error is returned, attributed to its item's origin.
pub fn expand(items: &[ProgramItem], data: &DataBundle) -> Result<FlatModel, ExpandError> {
    let mut ex = Expander {
        data,
        families: HashMap::new(),
        model: FlatModel {
            sense: ObjSense::Minimize,
            objective: Vec::new(),
            objective_offset: 0.0,
            vars: Vec::new(),
            rows: Vec::new(),
            indicators: Vec::new(),
            sos: Vec::new(),
        },
        origin: String::new(),
    };
    for item in items {
        if let Statement::Var(v) = &item.statement {
            ex.origin = item.origin.clone();
            ex.declare(v)?;
        }
    }
    let mut seen_objective = false;
    for item in items {
        ex.origin = item.origin.clone();
        match &item.statement {
            Statement::Var(_) => {}
            Statement::Objective { sense, expr, pos } => {
                if seen_objective {
                    return Err(ex.err(*pos, ExpandErrorKind::DuplicateObjective));
                }
                seen_objective = true;
                let lin = ex.eval(expr, &Vec::new())?;
                ex.model.sense = *sense;
                ex.model.objective_offset = lin.constant;
                ex.model.objective = lin.into_terms();
            }
            Statement::Constraint {
                quantifiers, body, ..
            } => ex.constraint(quantifiers, body)?,
        }
    }
    if !seen_objective {
        return Err(ExpandError {
            origin: String::new(),
            pos: None,
            kind: ExpandErrorKind::MissingObjective,
        });
    }
    Ok(ex.model)
}

#[cfg(test)]
mod tests {
    use super::super::{compile_program, parse_amdl};
    use super::*;

    fn factory_data() -> DataBundle {
        DataBundle::from_json(
            r#"{"dimensions":{"P":2,"M":2},
                "values":{"Profit":[3,2],"Hours":[[1,2],[3,1]],"Capacity":[8,9]}}"#,
        )
        .unwrap()
    }

    const FACTORY: &str = "var x{p in P};\n\
        maximize: sum(p in P) Profit[p] * x[p];\n\
        forall(m in M): sum(p in P) Hours[m,p] * x[p] <= Capacity[m];\n";

    #[test]
    fn factory_expands() {
        let m = compile_program(FACTORY, &factory_data()).unwrap();
        assert_eq!(m.sense, ObjSense::Maximize);
        let names: Vec<&str> = m.vars.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["x_0", "x_1"]);
        assert_eq!(m.objective, vec![(0, 3.0), (1, 2.0)]);
        assert_eq!(m.rows.len(), 2);
        assert_eq!(m.rows[1].name, "s3_1");
        assert_eq!(m.rows[1].terms, vec![(0, 3.0), (1, 1.0)]);
        assert_eq!(m.rows[1].rhs, 9.0);
        assert_eq!(m.vars[0].upper, f64::INFINITY);
    }

    #[test]
    fn terms_merge_and_constants_move() {
        let src = "var x; var y;\nminimize: x + 2 + x - y + y;\n2*x + 3 >= x + 5;";
        let m = compile_program(src, &DataBundle::default()).unwrap();
        assert_eq!(m.objective, vec![(0, 2.0)]);
        assert_eq!(m.objective_offset, 2.0);
        assert_eq!(m.rows[0].terms, vec![(0, 1.0)]);
        assert_eq!(m.rows[0].rhs, 2.0);
        assert_eq!(m.rows[0].cmp, Cmp::Ge);
    }

    #[test]
    fn unknown_symbol_is_attributed() {
        let items = vec![
            ProgramItem {
                origin: "x".into(),
                statement: parse_amdl("var x{p in P};", &[] as &[&str]).unwrap(),
            },
            ProgramItem {
                origin: "obj".into(),
                statement: parse_amdl("maximize: sum(p in P) Profit[p]*x[p];", &["x"]).unwrap(),
            },
            ProgramItem {
                origin: "c1".into(),
                statement: parse_amdl("sum(p in P) Flour_stock * x[p] <= 3;", &["x"]).unwrap(),
            },
        ];
        let err = expand(&items, &factory_data()).unwrap_err();
        assert_eq!(err.origin, "c1");
        assert_eq!(
            err.kind,
            ExpandErrorKind::UnknownSymbol("Flour_stock".into())
        );
    }

    #[test]
    fn out_of_range_and_arity() {
        let err = compile_program("var x{p in P};\nminimize: x[2];", &factory_data()).unwrap_err();
        assert!(err.contains("out of range"), "{err}");
        let err =
            compile_program("var x{p in P};\nminimize: x[0,1];", &factory_data()).unwrap_err();
        assert!(err.contains("index(es)"), "{err}");
        let err = compile_program("var x{p in Q};\nminimize: x[0];", &factory_data()).unwrap_err();
        assert!(err.contains("`Q`"), "{err}");
    }

    #[test]
    fn defaults_and_structures() {
        let src = "var n, integer; var b{w in 2} binary; var l{k in 3} <= 1;\n\
                   minimize: n;\n\
                   forall(w in 2): b[w] = 1 -> n >= 3;\n\
                   sos2(k in 3): l[k];";
        let m = compile_program(src, &DataBundle::default()).unwrap();
        assert_eq!(m.vars[0].upper, DEFAULT_INTEGER_UPPER);
        assert_eq!(m.vars[1].domain, Domain::Binary);
        assert_eq!(m.indicators.len(), 2);
        assert_eq!(m.indicators[1].binary, 2);
        assert_eq!(m.sos[0].members, vec![(3, 1.0), (4, 2.0), (5, 3.0)]);

        let bad = "var n; var b;\nminimize: n;\nb = 1 -> n >= 3;";
        let err = compile_program(bad, &DataBundle::default()).unwrap_err();
        assert!(err.contains("not binary"), "{err}");
    }

    #[test]
    fn missing_objective() {
        let err = compile_program("var x;\nx <= 3;", &DataBundle::default()).unwrap_err();
        assert!(err.contains("no objective"));
    }
}
