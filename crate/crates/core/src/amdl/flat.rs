use serde::{Deserialize, Serialize};

use super::ast::{Cmp, ObjSense, SosKind};
use crate::model::Domain;

/// Absolute tolerance used when judging solver answers.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Tolerance used inside the exhaustive oracle.
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatVar {
    pub name: String,
    /// Symbol of the variable family this entry came from.
    pub origin: String,
    pub lower: f64,
    pub upper: f64,
    pub domain: Domain,
}

impl FlatVar {
    pub fn is_integral(&self) -> bool {
        self.domain != Domain::Continuous
    }
}

/// A linear row `sum(coef * x) cmp rhs`. Terms are sorted by variable index
/// with zero coefficients dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub name: String,
    /// Clause (or statement) the row was generated from.
    pub origin: String,
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl FlatRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.cmp {
            Cmp::Le => (lhs - self.rhs).max(0.0),
            Cmp::Ge => (self.rhs - lhs).max(0.0),
            Cmp::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Row enforced only when binary variable `binary` equals `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorLink {
    pub binary: usize,
    pub value: bool,
    pub row: FlatRow,
}

/// Special ordered set; members are `(variable index, weight)` in weight order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosGroup {
    pub name: String,
    pub origin: String,
    pub kind: SosKind,
    pub members: Vec<(usize, f64)>,
}

impl SosGroup {
    /// Largest member value outside the best allowed support (0 when the set
    /// condition holds).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let vals: Vec<f64> = self.members.iter().map(|&(j, _)| x[j].abs()).collect();
        match self.kind {
            SosKind::Sos1 => {
                let mut sorted = vals.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                sorted.get(1).copied().unwrap_or(0.0)
            }
            SosKind::Sos2 => {
                let best = (0..vals.len().saturating_sub(1))
                    .max_by(|&a, &b| (vals[a] + vals[a + 1]).total_cmp(&(vals[b] + vals[b + 1])))
                    .unwrap_or(0);
                vals.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != best && i != best + 1)
                    .map(|(_, v)| *v)
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// A fully expanded model: what gets written to the LP file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatModel {
    pub sense: ObjSense,
    pub objective: Vec<(usize, f64)>,
    #[serde(default)]
    pub objective_offset: f64,
    pub vars: Vec<FlatVar>,
    #[serde(default)]
    pub rows: Vec<FlatRow>,
    #[serde(default)]
    pub indicators: Vec<IndicatorLink>,
    #[serde(default)]
    pub sos: Vec<SosGroup>,
}

impl FlatModel {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    /// Copy with every integrality requirement dropped.
    pub fn relaxed(&self) -> FlatModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.domain = Domain::Continuous;
        }
        m
    }

    /// First difference between two models, comparing variables and terms by
    /// name so that variable order and origins do not matter.
    pub fn diff(&self, other: &FlatModel) -> Option<String> {
        if self.sense != other.sense {
            return Some("sense differs".into());
        }
        if self.objective_offset != other.objective_offset {
            return Some("objective offset differs".into());
        }
        let mut vars: Vec<_> = self
            .vars
            .iter()
            .map(|v| (&v.name, v.lower, v.upper, v.domain))
            .collect();
        let mut theirs: Vec<_> = other
            .vars
            .iter()
            .map(|v| (&v.name, v.lower, v.upper, v.domain))
            .collect();
        vars.sort_by(|a, b| a.0.cmp(b.0));
        theirs.sort_by(|a, b| a.0.cmp(b.0));
        if vars != theirs {
            return Some(format!("variables differ: {vars:?} vs {theirs:?}"));
        }
        let named = |m: &FlatModel, terms: &[(usize, f64)]| {
            let mut t: Vec<(String, f64)> = terms
                .iter()
                .map(|&(j, c)| (m.vars[j].name.clone(), c))
                .collect();
            t.sort_by(|a, b| a.0.cmp(&b.0));
            t
        };
        if named(self, &self.objective) != named(other, &other.objective) {
            return Some("objective differs".into());
        }
        let rows = |m: &FlatModel| {
            m.rows
                .iter()
                .map(|r| (None, r))
                .chain(
                    m.indicators
                        .iter()
                        .map(|i| (Some((m.vars[i.binary].name.clone(), i.value)), &i.row)),
                )
                .map(|(ind, r)| (ind, r.name.clone(), named(m, &r.terms), r.cmp, r.rhs))
                .collect::<Vec<_>>()
        };
        let (a, b) = (rows(self), rows(other));
        if a != b {
            return Some(format!("rows differ: {a:?} vs {b:?}"));
        }
        let sets = |m: &FlatModel| {
            m.sos
                .iter()
                .map(|g| {
                    let members: Vec<(String, f64)> = g
                        .members
                        .iter()
                        .map(|&(j, w)| (m.vars[j].name.clone(), w))
                        .collect();
                    (g.name.clone(), g.kind, members)
                })
                .collect::<Vec<_>>()
        };
        if sets(self) != sets(other) {
            return Some("special ordered sets differ".into());
        }
        None
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("flat model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub feasible: bool,
    pub max_violation: f64,
    /// Name of the row, bound or set with the largest violation.
    pub worst: Option<String>,
    pub objective: f64,
}

/// Evaluate `x` against every row, bound, integrality requirement, SOS set
/// and active indicator of `model`.
pub fn check(model: &FlatModel, x: &[f64]) -> CheckReport {
    check_with_tol(model, x, FEASIBILITY_TOL)
}

pub fn check_with_tol(model: &FlatModel, x: &[f64], tol: f64) -> CheckReport {
    assert_eq!(x.len(), model.vars.len(), "point has wrong dimension");
    let mut worst: Option<(f64, String)> = None;
    let mut note = |v: f64, name: &dyn Fn() -> String| {
        if v > worst.as_ref().map_or(0.0, |w| w.0) {
            worst = Some((v, name()));
        }
    };
    for (j, var) in model.vars.iter().enumerate() {
        note((var.lower - x[j]).max(x[j] - var.upper).max(0.0), &|| {
            format!("bounds of {}", var.name)
        });
        if var.is_integral() {
            note((x[j] - x[j].round()).abs(), &|| {
                format!("integrality of {}", var.name)
            });
        }
    }
    for row in &model.rows {
        note(row.violation(x), &|| row.name.clone());
    }
    for ind in &model.indicators {
        let target = if ind.value { 1.0 } else { 0.0 };
        if (x[ind.binary] - target).abs() <= tol {
            note(ind.row.violation(x), &|| ind.row.name.clone());
        }
    }
    for group in &model.sos {
        note(group.violation(x), &|| group.name.clone());
    }
    let max_violation = worst.as_ref().map_or(0.0, |w| w.0);
    CheckReport {
        feasible: max_violation <= tol,
        max_violation,
        worst: worst.map(|w| w.1),
        objective: model.objective_value(x),
    }
}
