//! Exhaustive solver for tiny models, used as ground truth in tests and by
//! `nl2milp oracle`.
//!
//! Integer variables (all with finite bounds) are enumerated on their
//! lattice. For each integer assignment the remaining continuous variables
//! (at most [`MAX_VERTEX_VARS`]) are solved by enumerating the vertices of
//! the feasible polyhedron, with infinite bounds replaced by an artificial
//! box; unboundedness is then confirmed by looking for an improving ray.

use serde::Serialize;
use thiserror::Error;

use super::ast::{Cmp, ObjSense, SosKind};
use super::flat::{check_with_tol, FlatModel, FlatRow, ORACLE_TOL};

pub const MAX_LATTICE_POINTS: u64 = 1_000_000;
/// Lattice limit when continuous variables are also present.
pub const MAX_MIXED_LATTICE_POINTS: u64 = 10_000;
pub const MAX_VERTEX_VARS: usize = 3;
pub const MAX_VERTEX_ROWS: usize = 12;
const MAX_SUPPORT_PATTERNS: u64 = 10_000;
const BOX: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OracleOutcome {
    Optimal { objective: f64, values: Vec<f64> },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("model is outside the oracle's scope: {0}")]
    OracleScopeExceeded(String),
}

fn scope(msg: impl Into<String>) -> OracleError {
    OracleError::OracleScopeExceeded(msg.into())
}

/// `a . y <= b` or `a . y = b`.
#[derive(Debug, Clone)]
struct Half {
    a: Vec<f64>,
    b: f64,
    eq: bool,
}

enum Lp {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

fn tol_for(h: &Half, y: &[f64]) -> f64 {
    let scale: f64 = h.a.iter().zip(y).map(|(a, y)| (a * y).abs()).sum::<f64>() + h.b.abs();
    ORACLE_TOL * (1.0 + scale)
}

fn satisfied(h: &Half, y: &[f64]) -> bool {
    let lhs: f64 = h.a.iter().zip(y).map(|(a, y)| a * y).sum();
    let t = tol_for(h, y);
    if h.eq {
        (lhs - h.b).abs() <= t
    } else {
        lhs <= h.b + t
    }
}

/// Solve the square system `m y = r` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                r[row] -= f * r[col];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * y[k]).sum();
        y[i] = (r[i] - s) / m[i][i];
    }
    Some(y)
}

fn combinations(m: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, f);
            cur.pop();
        }
    }
    rec(0, m, k, &mut Vec::with_capacity(k), f);
}

/// Minimise `c . y` over the vertices of `{y : halves}`; the caller makes
/// sure the region is bounded.
fn best_vertex(c: &[f64], halves: &[Half]) -> Option<(Vec<f64>, f64)> {
    let n = c.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    combinations(halves.len(), n, &mut |pick| {
        let m: Vec<Vec<f64>> = pick.iter().map(|&i| halves[i].a.clone()).collect();
        let r: Vec<f64> = pick.iter().map(|&i| halves[i].b).collect();
        let Some(y) = solve_square(m, r) else { return };
        if !halves.iter().all(|h| satisfied(h, &y)) {
            return;
        }
        let val: f64 = c.iter().zip(&y).map(|(c, y)| c * y).sum();
        let better = match &best {
            None => true,
            Some((_, b)) => val < b - 1e-12 * (1.0 + b.abs()),
        };
        if better {
            best = Some((y, val));
        }
    });
    best
}

/// Minimise `c . y` subject to `halves` and the given bounds.
fn solve_lp(c: &[f64], halves: &[Half], lower: &[f64], upper: &[f64]) -> Lp {
    let n = c.len();
    let unit = |i: usize, s: f64| {
        let mut a = vec![0.0; n];
        a[i] = s;
        a
    };
    let mut boxed = halves.to_vec();
    for i in 0..n {
        boxed.push(Half {
            a: unit(i, -1.0),
            b: if lower[i].is_finite() { -lower[i] } else { BOX },
            eq: false,
        });
        boxed.push(Half {
            a: unit(i, 1.0),
            b: if upper[i].is_finite() { upper[i] } else { BOX },
            eq: false,
        });
    }
    let Some((y, _)) = best_vertex(c, &boxed) else {
        return Lp::Infeasible;
    };

    // Improving direction within the recession cone, normalised to |d_i| <= 1.
    let mut cone: Vec<Half> = halves
        .iter()
        .map(|h| Half {
            a: h.a.clone(),
            b: 0.0,
            eq: h.eq,
        })
        .collect();
    for i in 0..n {
        let lo = if lower[i].is_finite() { 0.0 } else { 1.0 };
        let hi = if upper[i].is_finite() { 0.0 } else { 1.0 };
        cone.push(Half {
            a: unit(i, -1.0),
            b: lo,
            eq: false,
        });
        cone.push(Half {
            a: unit(i, 1.0),
            b: hi,
            eq: false,
        });
    }
    if let Some((_, dir)) = best_vertex(c, &cone) {
        let scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if dir < -1e-9 * (1.0 + scale) {
            return Lp::Unbounded;
        }
    }
    Lp::Optimal(y)
}

fn lattice_ranges(model: &FlatModel, ints: &[usize]) -> Result<Vec<(i64, i64)>, OracleError> {
    ints.iter()
        .map(|&j| {
            let v = &model.vars[j];
            if !v.lower.is_finite() || !v.upper.is_finite() {
                return Err(scope(format!(
                    "integer variable `{}` has an infinite bound",
                    v.name
                )));
            }
            let lo = (v.lower - 1e-9).ceil();
            let hi = (v.upper + 1e-9).floor();
            if lo.abs() > 1e15 || hi.abs() > 1e15 {
                return Err(scope(format!(
                    "integer variable `{}` has huge bounds",
                    v.name
                )));
            }
            Ok((lo as i64, hi as i64))
        })
        .collect()
}

/// Allowed supports of one set: each entry lists member positions that may
/// be nonzero.
fn supports(kind: SosKind, k: usize) -> Vec<Vec<usize>> {
    match kind {
        _ if k <= 1 => vec![(0..k).collect()],
        SosKind::Sos1 => (0..k).map(|i| vec![i]).collect(),
        SosKind::Sos2 => (0..k - 1).map(|i| vec![i, i + 1]).collect(),
    }
}

pub fn oracle_solve(model: &FlatModel) -> Result<OracleOutcome, OracleError> {
    let ints: Vec<usize> = (0..model.vars.len())
        .filter(|&j| model.vars[j].is_integral())
        .collect();
    let conts: Vec<usize> = (0..model.vars.len())
        .filter(|&j| !model.vars[j].is_integral())
        .collect();
    if conts.len() > MAX_VERTEX_VARS {
        return Err(scope(format!(
            "{} continuous variables (limit {MAX_VERTEX_VARS})",
            conts.len()
        )));
    }
    let row_count = model.rows.len() + model.indicators.len();
    if !conts.is_empty() && row_count > MAX_VERTEX_ROWS {
        return Err(scope(format!(
            "{row_count} rows with continuous variables (limit {MAX_VERTEX_ROWS})"
        )));
    }
    let ranges = lattice_ranges(model, &ints)?;
    let limit = if conts.is_empty() {
        MAX_LATTICE_POINTS
    } else {
        MAX_MIXED_LATTICE_POINTS
    };
    let mut points: u64 = 1;
    for &(lo, hi) in &ranges {
        if hi < lo {
            return Ok(OracleOutcome::Infeasible);
        }
        points = points.saturating_mul((hi - lo + 1) as u64);
        if points > limit {
            return Err(scope(format!("more than {limit} integer lattice points")));
        }
    }
    let patterns: Vec<Vec<Vec<usize>>> = model
        .sos
        .iter()
        .filter(|g| g.members.iter().any(|&(j, _)| !model.vars[j].is_integral()))
        .map(|g| supports(g.kind, g.members.len()))
        .collect();
    let sos_with_cont: Vec<&super::flat::SosGroup> = model
        .sos
        .iter()
        .filter(|g| g.members.iter().any(|&(j, _)| !model.vars[j].is_integral()))
        .collect();
    let pattern_count = patterns
        .iter()
        .fold(1u64, |acc, p| acc.saturating_mul(p.len() as u64));
    if pattern_count > MAX_SUPPORT_PATTERNS {
        return Err(scope("too many special ordered set supports"));
    }

    let sign = match model.sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    };
    let mut obj = vec![0.0; model.vars.len()];
    for &(j, c) in &model.objective {
        obj[j] += sign * c;
    }
    let cpos: Vec<Option<usize>> = (0..model.vars.len())
        .map(|j| conts.iter().position(|&k| k == j))
        .collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut x = vec![0.0; model.vars.len()];
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        for (k, &j) in ints.iter().enumerate() {
            x[j] = cur[k] as f64;
        }
        let mut consider = |x: &[f64]| {
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !check_with_tol(model, x, ORACLE_TOL * (1.0 + scale) * 10.0).feasible {
                return;
            }
            let val: f64 = obj.iter().zip(x).map(|(c, v)| c * v).sum();
            let better = match &best {
                None => true,
                Some((_, b)) => val < b - 1e-12 * (1.0 + b.abs()),
            };
            if better {
                best = Some((x.to_vec(), val));
            }
        };
        if conts.is_empty() {
            consider(&x);
        } else {
            let mut halves = Vec::new();
            let mut push_row = |row: &FlatRow| {
                let mut a = vec![0.0; conts.len()];
                let mut b = row.rhs;
                for &(j, c) in &row.terms {
                    match cpos[j] {
                        Some(p) => a[p] += c,
                        None => b -= c * x[j],
                    }
                }
                match row.cmp {
                    Cmp::Le => halves.push(Half { a, b, eq: false }),
                    Cmp::Ge => halves.push(Half {
                        a: a.iter().map(|v| -v).collect(),
                        b: -b,
                        eq: false,
                    }),
                    Cmp::Eq => halves.push(Half { a, b, eq: true }),
                }
            };
            for row in &model.rows {
                push_row(row);
            }
            for ind in &model.indicators {
                let target = if ind.value { 1.0 } else { 0.0 };
                if x[ind.binary] == target {
                    push_row(&ind.row);
                }
            }
            let c: Vec<f64> = conts.iter().map(|&j| obj[j]).collect();
            let lower: Vec<f64> = conts.iter().map(|&j| model.vars[j].lower).collect();
            let upper: Vec<f64> = conts.iter().map(|&j| model.vars[j].upper).collect();

            let mut choice = vec![0usize; patterns.len()];
            'patterns: loop {
                let mut sub = halves.clone();
                let mut valid = true;
                for (g, group) in sos_with_cont.iter().enumerate() {
                    let allowed = &patterns[g][choice[g]];
                    for (pos, &(j, _)) in group.members.iter().enumerate() {
                        if allowed.contains(&pos) {
                            continue;
                        }
                        match cpos[j] {
                            Some(p) => {
                                let mut a = vec![0.0; conts.len()];
                                a[p] = 1.0;
                                sub.push(Half {
                                    a,
                                    b: 0.0,
                                    eq: true,
                                });
                            }
                            None if x[j] != 0.0 => valid = false,
                            None => {}
                        }
                    }
                }
                if valid {
                    match solve_lp(&c, &sub, &lower, &upper) {
                        Lp::Infeasible => {}
                        Lp::Unbounded => {
                            // only counts when the integer part itself is consistent
                            let mut probe = x.clone();
                            if let Lp::Optimal(y) =
                                solve_lp(&vec![0.0; conts.len()], &sub, &lower, &upper)
                            {
                                for (p, &j) in conts.iter().enumerate() {
                                    probe[j] = y[p];
                                }
                                let scale = probe.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                                if check_with_tol(model, &probe, ORACLE_TOL * (1.0 + scale) * 10.0)
                                    .feasible
                                {
                                    return Ok(OracleOutcome::Unbounded);
                                }
                            }
                        }
                        Lp::Optimal(y) => {
                            for (p, &j) in conts.iter().enumerate() {
                                x[j] = y[p];
                            }
                            consider(&x);
                        }
                    }
                }
                for g in 0..choice.len() {
                    choice[g] += 1;
                    if choice[g] < patterns[g].len() {
                        continue 'patterns;
                    }
                    choice[g] = 0;
                }
                break;
            }
        }

        // advance the integer odometer
        let mut k = 0;
        loop {
            if k == cur.len() {
                return Ok(match best {
                    Some((values, _)) => OracleOutcome::Optimal {
                        objective: model.objective_value(&values),
                        values,
                    },
                    None => OracleOutcome::Infeasible,
                });
            }
            if cur[k] < ranges[k].1 {
                cur[k] += 1;
                break;
            }
            cur[k] = ranges[k].0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::compile_program;
    use super::*;
    use crate::model::DataBundle;

    fn solve(src: &str) -> OracleOutcome {
        oracle_solve(&compile_program(src, &DataBundle::default()).unwrap()).unwrap()
    }

    fn optimum(src: &str) -> (f64, Vec<f64>) {
        match solve(src) {
            OracleOutcome::Optimal { objective, values } => (objective, values),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn toy_lp() {
        let (obj, x) = optimum("var x; var y;\nmaximize: 3*x + 2*y;\nx + y <= 4;");
        assert!((obj - 12.0).abs() < 1e-9);
        assert!((x[0] - 4.0).abs() < 1e-9 && x[1].abs() < 1e-9);
    }

    #[test]
    fn factory_lp() {
        let (obj, x) = optimum(
            "var x{i in 2};\nmaximize: 3*x[0] + 2*x[1];\nx[0] + 2*x[1] <= 8;\n3*x[0] + x[1] <= 9;",
        );
        assert!((obj - 12.0).abs() < 1e-9, "{obj}");
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn integer_rounding_matters() {
        let (obj, _) = optimum("var x <= 10, integer;\nmaximize: x;\n2*x <= 7;");
        assert_eq!(obj, 3.0);
        let (obj, _) = optimum("var x <= 10;\nmaximize: x;\n2*x <= 7;");
        assert!((obj - 3.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        assert_eq!(
            solve("var x;\nminimize: x;\nx >= 3;\nx <= 2;"),
            OracleOutcome::Infeasible
        );
        assert_eq!(
            solve("var x; var y;\nmaximize: x - y;\nx - y >= 1;"),
            OracleOutcome::Unbounded
        );
        assert_eq!(
            solve("var x <= 5, integer;\nminimize: x;\nx >= 6;"),
            OracleOutcome::Infeasible
        );
    }

    #[test]
    fn equality_and_free_direction() {
        let (obj, _) = optimum("var x; var y;\nminimize: x + y;\nx + y = 5;\nx - y <= 1;");
        assert!((obj - 5.0).abs() < 1e-9);
    }

    #[test]
    fn indicator_and_sos() {
        let (obj, _) = optimum("var b binary; var x <= 10;\nmaximize: x - 3*b;\nb = 0 -> x <= 2;");
        assert!((obj - 7.0).abs() < 1e-9);
        let (obj, x) = optimum(
            "var l{k in 3} <= 1;\nmaximize: l[0] + 2*l[2];\nl[0] + l[1] + l[2] = 1;\nsos1(k in 3): l[k];",
        );
        assert!((obj - 2.0).abs() < 1e-9);
        assert!((x[2] - 1.0).abs() < 1e-9);
        let (obj, _) = optimum(
            "var l{k in 3} <= 1;\nmaximize: 5*l[0] + 5*l[2];\nl[0] + l[1] + l[2] = 1;\nsos2(k in 3): l[k];",
        );
        assert!((obj - 5.0).abs() < 1e-9);
    }

    #[test]
    fn scope_limits() {
        let m = compile_program(
            "var x{i in 4};\nminimize: x[0];\nx[0] >= 1;",
            &DataBundle::default(),
        )
        .unwrap();
        assert!(oracle_solve(&m).is_err());
        let m = compile_program("var n, integer;\nminimize: n;", &DataBundle::default()).unwrap();
        assert!(matches!(
            oracle_solve(&m),
            Err(OracleError::OracleScopeExceeded(_))
        ));
    }
}
