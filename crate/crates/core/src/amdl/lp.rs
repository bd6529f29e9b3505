//! Writer and reader for the subset of the CPLEX LP format we emit.

use std::fmt::Write as _;

use thiserror::Error;

use super::ast::{Cmp, ObjSense, SosKind};
use super::flat::{FlatModel, FlatRow, FlatVar, IndicatorLink, SosGroup};
use crate::model::Domain;

const OFFSET_COMMENT: &str = "\\ objective offset ";
const WRAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("unrepresentable structure: {0}")]
    UnrepresentableStructure(String),
    #[error("LP parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

fn linear(model: &FlatModel, terms: &[(usize, f64)]) -> Vec<String> {
    if terms.is_empty() {
        return vec![format!(
            "0 {}",
            model.vars.first().map_or("x", |v| v.name.as_str())
        )];
    }
    terms
        .iter()
        .enumerate()
        .map(|(k, &(j, c))| {
            let name = &model.vars[j].name;
            let sign = if c < 0.0 {
                "- "
            } else if k > 0 {
                "+ "
            } else {
                ""
            };
            let mag = c.abs();
            if mag == 1.0 {
                format!("{sign}{name}")
            } else {
                format!("{sign}{} {name}", num(mag))
            }
        })
        .collect()
}

fn push_wrapped(out: &mut String, head: String, parts: Vec<String>, tail: String) {
    let mut line = head;
    for p in parts
        .into_iter()
        .chain(std::iter::once(tail).filter(|t| !t.is_empty()))
    {
        if line.len() + p.len() + 1 > WRAP && !line.trim().is_empty() {
            out.push_str(line.trim_end());
            out.push('\n');
            line = "   ".to_string();
        }
        if !line.ends_with(' ') {
            line.push(' ');
        }
        line.push_str(&p);
    }
    out.push_str(&line);
    out.push('\n');
}

fn row_parts(model: &FlatModel, row: &FlatRow) -> (Vec<String>, String) {
    (
        linear(model, &row.terms),
        format!("{} {}", row.cmp.symbol(), num(row.rhs)),
    )
}

/// Render `model` as LP text. Deterministic: the same model always yields
/// byte-identical output.
pub fn emit_lp(model: &FlatModel) -> Result<String, LpError> {
    for ind in &model.indicators {
        let v = &model.vars[ind.binary];
        if v.domain != Domain::Binary {
            return Err(LpError::UnrepresentableStructure(format!(
                "indicator variable `{}` is not binary",
                v.name
            )));
        }
    }
    let mut out = String::new();
    if model.objective_offset != 0.0 {
        let _ = writeln!(out, "{OFFSET_COMMENT}{}", num(model.objective_offset));
    }
    out.push_str(match model.sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    let obj = if model.objective.is_empty() {
        Vec::new()
    } else {
        linear(model, &model.objective)
    };
    push_wrapped(&mut out, " obj:".into(), obj, String::new());

    out.push_str("Subject To\n");
    for row in &model.rows {
        let (parts, tail) = row_parts(model, row);
        push_wrapped(&mut out, format!(" {}:", row.name), parts, tail);
    }
    for ind in &model.indicators {
        let (parts, tail) = row_parts(model, &ind.row);
        let head = format!(
            " {}: {} = {} ->",
            ind.row.name,
            model.vars[ind.binary].name,
            u8::from(ind.value)
        );
        push_wrapped(&mut out, head, parts, tail);
    }

    let mut bounds = String::new();
    for v in &model.vars {
        let (lo, hi) = (v.lower, v.upper);
        let line = if v.domain == Domain::Binary && lo == 0.0 && hi == 1.0 {
            continue;
        } else if lo == hi {
            format!(" {} = {}", v.name, num(lo))
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            format!(" {} free", v.name)
        } else if hi == f64::INFINITY {
            if lo == 0.0 && v.domain == Domain::Continuous {
                continue;
            }
            format!(" {} >= {}", v.name, num(lo))
        } else {
            format!(" {} <= {} <= {}", num(lo), v.name, num(hi))
        };
        bounds.push_str(&line);
        bounds.push('\n');
    }
    if !bounds.is_empty() {
        out.push_str("Bounds\n");
        out.push_str(&bounds);
    }
    for (header, domain) in [("Generals", Domain::Integer), ("Binaries", Domain::Binary)] {
        let names: Vec<String> = model
            .vars
            .iter()
            .filter(|v| v.domain == domain)
            .map(|v| v.name.clone())
            .collect();
        if !names.is_empty() {
            out.push_str(header);
            out.push('\n');
            push_wrapped(&mut out, String::new(), names, String::new());
        }
    }
    if !model.sos.is_empty() {
        out.push_str("SOS\n");
        for g in &model.sos {
            let kind = match g.kind {
                SosKind::Sos1 => "S1",
                SosKind::Sos2 => "S2",
            };
            let parts = g
                .members
                .iter()
                .map(|&(j, w)| format!("{}:{}", model.vars[j].name, num(w)))
                .collect();
            push_wrapped(
                &mut out,
                format!(" {}: {kind}::", g.name),
                parts,
                String::new(),
            );
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    Sos,
    End,
}

struct Reader {
    model: FlatModel,
}

impl Reader {
    fn var(&mut self, name: &str) -> usize {
        if let Some(j) = self.model.var_index(name) {
            return j;
        }
        self.model.vars.push(FlatVar {
            name: name.to_string(),
            origin: name.split('_').next().unwrap_or(name).to_string(),
            lower: 0.0,
            upper: f64::INFINITY,
            domain: Domain::Continuous,
        });
        self.model.vars.len() - 1
    }

    fn terms(&mut self, text: &str, line: usize) -> Result<Vec<(usize, f64)>, LpError> {
        let err = |m: String| LpError::Parse { line, message: m };
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        for tok in text.split_whitespace() {
            match tok {
                "+" => {}
                "-" => sign = -sign,
                _ => {
                    if let Ok(v) = tok.parse::<f64>() {
                        if coef.is_some() {
                            return Err(err(format!("two numbers in a row near `{tok}`")));
                        }
                        coef = Some(v);
                        continue;
                    }
                    let j = self.var(tok);
                    let c = sign * coef.take().unwrap_or(1.0);
                    match out.iter_mut().find(|(k, _)| *k == j) {
                        Some(t) => t.1 += c,
                        None => out.push((j, c)),
                    }
                    sign = 1.0;
                }
            }
        }
        if coef.is_some() {
            return Err(err("dangling coefficient".into()));
        }
        out.retain(|&(_, c)| c != 0.0);
        out.sort_by_key(|&(j, _)| j);
        Ok(out)
    }

    fn row(&mut self, name: &str, text: &str, line: usize) -> Result<FlatRow, LpError> {
        let err = |m: &str| LpError::Parse {
            line,
            message: m.to_string(),
        };
        let (pos, cmp, len) = ["<=", ">=", "=<", "=>", "="]
            .iter()
            .find_map(|op| text.find(op).map(|p| (p, *op, op.len())))
            .ok_or_else(|| err("missing comparison"))?;
        let cmp = match cmp {
            "<=" | "=<" => Cmp::Le,
            ">=" | "=>" => Cmp::Ge,
            _ => Cmp::Eq,
        };
        let rhs = text[pos + len..]
            .trim()
            .parse::<f64>()
            .map_err(|_| err("right-hand side must be a number"))?;
        Ok(FlatRow {
            name: name.to_string(),
            origin: name.to_string(),
            terms: self.terms(&text[..pos], line)?,
            cmp,
            rhs,
        })
    }

    fn bound(&mut self, text: &str, line: usize) -> Result<(), LpError> {
        let err = |m: String| LpError::Parse { line, message: m };
        let parse = |s: &str| -> Result<f64, LpError> {
            match s.to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => s.parse().map_err(|_| err(format!("bad bound `{s}`"))),
            }
        };
        let toks: Vec<&str> = text.split_whitespace().collect();
        match toks.as_slice() {
            [name, free] if free.eq_ignore_ascii_case("free") => {
                let j = self.var(name);
                self.model.vars[j].lower = f64::NEG_INFINITY;
                self.model.vars[j].upper = f64::INFINITY;
            }
            [lo, "<=", name, "<=", hi] => {
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                let j = self.var(name);
                self.model.vars[j].lower = lo;
                self.model.vars[j].upper = hi;
            }
            [name, op, v] if parse(v).is_ok() => {
                let v = parse(v)?;
                let j = self.var(name);
                let var = &mut self.model.vars[j];
                match *op {
                    ">=" => var.lower = v,
                    "<=" => var.upper = v,
                    "=" => {
                        var.lower = v;
                        var.upper = v;
                    }
                    _ => return Err(err(format!("bad bound operator `{op}`"))),
                }
            }
            [v, op, name] => {
                let v = parse(v)?;
                let j = self.var(name);
                let var = &mut self.model.vars[j];
                match *op {
                    "<=" => var.lower = v,
                    ">=" => var.upper = v,
                    _ => return Err(err(format!("bad bound operator `{op}`"))),
                }
            }
            _ => return Err(err(format!("unrecognised bound `{text}`"))),
        }
        Ok(())
    }
}

fn section_of(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    Some(match l.as_str() {
        "maximize" | "maximise" | "max" => Section::Objective,
        "minimize" | "minimise" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "generals" | "general" | "gen" => Section::Generals,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "sos" => Section::Sos,
        "end" => Section::End,
        _ => return None,
    })
}

/// Split a section into logical statements: a statement starts on a line
/// containing `:` and continues on following lines without one.
fn statements(lines: &[(usize, &str)]) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    for &(n, l) in lines {
        match out.last_mut() {
            Some(last) if !l.contains(':') => {
                last.1.push(' ');
                last.1.push_str(l.trim());
            }
            _ => out.push((n, l.trim().to_string())),
        }
    }
    out
}

/// Parse LP text of the form produced by [`emit_lp`]. Origins are set to the
/// row or set name since the file does not carry them.
pub fn parse_lp(text: &str) -> Result<FlatModel, LpError> {
    let mut r = Reader {
        model: FlatModel {
            sense: ObjSense::Minimize,
            objective: Vec::new(),
            objective_offset: 0.0,
            vars: Vec::new(),
            rows: Vec::new(),
            indicators: Vec::new(),
            sos: Vec::new(),
        },
    };
    let mut section = Section::None;
    let mut buckets: Vec<(Section, Vec<(usize, &str)>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(rest) = raw.trim().strip_prefix(OFFSET_COMMENT.trim_end()) {
            r.model.objective_offset = rest.trim().parse().map_err(|_| LpError::Parse {
                line: n,
                message: "bad objective offset".into(),
            })?;
            continue;
        }
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_of(line) {
            if s == Section::Objective {
                r.model.sense = if line.trim().to_ascii_lowercase().starts_with("max") {
                    ObjSense::Maximize
                } else {
                    ObjSense::Minimize
                };
            }
            section = s;
            buckets.push((s, Vec::new()));
            continue;
        }
        match buckets.last_mut() {
            Some((_, lines)) if section != Section::End => lines.push((n, line)),
            _ => {
                return Err(LpError::Parse {
                    line: n,
                    message: "text outside of any section".into(),
                })
            }
        }
    }

    // Declare variables in order of first appearance in the objective and rows.
    for (section, lines) in &buckets {
        match section {
            Section::Objective => {
                let joined: Vec<String> = lines.iter().map(|(_, l)| l.trim().to_string()).collect();
                let joined = joined.join(" ");
                let body = joined.split_once(':').map_or(joined.as_str(), |(_, b)| b);
                let line = lines.first().map_or(0, |l| l.0);
                r.model.objective = r.terms(body, line)?;
            }
            Section::Constraints => {
                for (n, stmt) in statements(lines) {
                    let (name, body) = stmt.split_once(':').ok_or(LpError::Parse {
                        line: n,
                        message: "constraint without a name".into(),
                    })?;
                    let name = name.trim();
                    if let Some((cond, row)) = body.split_once("->") {
                        let (b, v) = cond.split_once('=').ok_or(LpError::Parse {
                            line: n,
                            message: "bad indicator condition".into(),
                        })?;
                        let binary = r.var(b.trim());
                        let value = match v.trim() {
                            "1" => true,
                            "0" => false,
                            _ => {
                                return Err(LpError::Parse {
                                    line: n,
                                    message: "indicator value must be 0 or 1".into(),
                                })
                            }
                        };
                        let row = r.row(name, row, n)?;
                        r.model
                            .indicators
                            .push(IndicatorLink { binary, value, row });
                    } else {
                        let row = r.row(name, body, n)?;
                        r.model.rows.push(row);
                    }
                }
            }
            Section::Bounds => {
                for (n, l) in lines {
                    r.bound(l, *n)?;
                }
            }
            Section::Generals | Section::Binaries => {
                for (_, l) in lines {
                    for name in l.split_whitespace() {
                        let j = r.var(name);
                        let v = &mut r.model.vars[j];
                        if *section == Section::Binaries {
                            v.domain = Domain::Binary;
                        } else {
                            v.domain = Domain::Integer;
                        }
                    }
                }
            }
            Section::Sos => {
                for (n, stmt) in statements(lines) {
                    let (name, rest) = stmt.split_once(':').ok_or(LpError::Parse {
                        line: n,
                        message: "set without a name".into(),
                    })?;
                    let (kind, members) = rest.split_once("::").ok_or(LpError::Parse {
                        line: n,
                        message: "expected `S1::` or `S2::`".into(),
                    })?;
                    let kind = match kind.trim() {
                        "S1" => SosKind::Sos1,
                        "S2" => SosKind::Sos2,
                        other => {
                            return Err(LpError::Parse {
                                line: n,
                                message: format!("unknown set type `{other}`"),
                            })
                        }
                    };
                    let mut group = SosGroup {
                        name: name.trim().to_string(),
                        origin: name.trim().to_string(),
                        kind,
                        members: Vec::new(),
                    };
                    for m in members.split_whitespace() {
                        let (v, w) = m.rsplit_once(':').ok_or(LpError::Parse {
                            line: n,
                            message: format!("bad set member `{m}`"),
                        })?;
                        let w = w.parse::<f64>().map_err(|_| LpError::Parse {
                            line: n,
                            message: format!("bad set weight `{w}`"),
                        })?;
                        group.members.push((r.var(v), w));
                    }
                    r.model.sos.push(group);
                }
            }
            Section::None | Section::End => {}
        }
    }
    // Binaries declared without bounds live in [0, 1].
    for (section, lines) in &buckets {
        if *section == Section::Binaries {
            let bounded: Vec<&str> = buckets
                .iter()
                .filter(|(s, _)| *s == Section::Bounds)
                .flat_map(|(_, ls)| ls.iter().flat_map(|(_, l)| l.split_whitespace()))
                .collect();
            for (_, l) in lines {
                for name in l.split_whitespace() {
                    if !bounded.contains(&name) {
                        let j = r.var(name);
                        r.model.vars[j].upper = 1.0;
                    }
                }
            }
        }
    }
    Ok(r.model)
}
