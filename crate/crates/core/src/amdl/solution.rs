//! Reading solver answers. Two dialects are understood; see
//! `docs/solution-formats.md`.

use serde::Serialize;
use thiserror::Error;

use super::flat::FlatModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped early (time or iteration limit) or any other status line.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionDialect {
    /// Status line, `obj <value>` line, then `<name> <value>` lines.
    Plain,
    /// `<Status> - objective value <v>` then `<idx> <name> <value> <reduced cost>` lines.
    Columnar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub status: SolveStatus,
    /// Objective as reported by the solver, if any.
    pub reported_objective: Option<f64>,
    /// One value per model variable, in model order.
    pub values: Vec<f64>,
    /// Variables absent from the file (taken as zero).
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolutionError {
    #[error("solution mentions unknown variable `{0}`")]
    UnknownVariableName(String),
    #[error("unparseable solution on line {line}: {message}")]
    UnparseableSolution { line: usize, message: String },
}

fn unparseable(line: usize, message: impl Into<String>) -> SolutionError {
    SolutionError::UnparseableSolution {
        line,
        message: message.into(),
    }
}

fn status_of(text: &str) -> SolveStatus {
    let t = text.trim().to_ascii_lowercase();
    if t.starts_with("optimal") {
        SolveStatus::Optimal
    } else if t.contains("infeasible") {
        SolveStatus::Infeasible
    } else if t.contains("unbounded") {
        SolveStatus::Unbounded
    } else {
        SolveStatus::Stopped
    }
}

pub fn detect_dialect(text: &str) -> SolutionDialect {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.contains("objective value") {
        SolutionDialect::Columnar
    } else {
        SolutionDialect::Plain
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64, SolutionError> {
    tok.parse::<f64>()
        .map_err(|_| unparseable(line, format!("`{tok}` is not a number")))
}

/// Parse a solution file for `model`, detecting the dialect from the first
/// line. Variables not mentioned are set to zero and listed in `missing`.
pub fn parse_solution(text: &str, model: &FlatModel) -> Result<Solution, SolutionError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first_no, first) = lines
        .next()
        .ok_or_else(|| unparseable(1, "empty solution file"))?;
    let mut values = vec![None; model.vars.len()];
    let mut assign = |name: &str, v: f64| -> Result<(), SolutionError> {
        let j = model
            .var_index(name)
            .ok_or_else(|| SolutionError::UnknownVariableName(name.to_string()))?;
        values[j] = Some(v);
        Ok(())
    };

    let (status, reported_objective) = match detect_dialect(text) {
        SolutionDialect::Columnar => {
            let (head, obj) = first
                .split_once("objective value")
                .ok_or_else(|| unparseable(first_no, "missing objective value"))?;
            let status_text = head.trim().trim_end_matches('-').trim();
            let obj = parse_value(obj.trim(), first_no)?;
            for (n, l) in lines {
                let l = l.trim_start_matches("**").trim();
                let toks: Vec<&str> = l.split_whitespace().collect();
                match toks.as_slice() {
                    [idx, name, value, ..] if idx.parse::<usize>().is_ok() => {
                        assign(name, parse_value(value, n)?)?;
                    }
                    _ => return Err(unparseable(n, format!("unexpected line `{l}`"))),
                }
            }
            (status_of(status_text), Some(obj))
        }
        SolutionDialect::Plain => {
            let status = status_of(first);
            let mut obj = None;
            for (n, l) in lines {
                let toks: Vec<&str> = l.split_whitespace().collect();
                match toks.as_slice() {
                    ["obj" | "objective", v] if obj.is_none() => obj = Some(parse_value(v, n)?),
                    [name, v] => assign(name, parse_value(v, n)?)?,
                    _ => return Err(unparseable(n, format!("unexpected line `{l}`"))),
                }
            }
            (status, obj)
        }
    };

    let mut missing = Vec::new();
    let values = values
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            v.unwrap_or_else(|| {
                if status == SolveStatus::Optimal {
                    log::warn!("solution omits `{}`; taking 0", model.vars[j].name);
                }
                missing.push(model.vars[j].name.clone());
                0.0
            })
        })
        .collect();
    Ok(Solution {
        status,
        reported_objective,
        values,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::super::compile_program;
    use super::*;
    use crate::model::DataBundle;

    fn model() -> FlatModel {
        compile_program(
            "var x{i in 2}; var y;\nmaximize: 3*x[0] + 2*x[1];\nx[0] + x[1] <= 4;",
            &DataBundle::default(),
        )
        .unwrap()
    }

    #[test]
    fn plain_dialect() {
        let s = parse_solution("Optimal\nobj 12\nx_0 4\nx_1 0\n", &model()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.reported_objective, Some(12.0));
        assert_eq!(s.values, vec![4.0, 0.0, 0.0]);
        assert_eq!(s.missing, vec!["y".to_string()]);
    }

    #[test]
    fn columnar_dialect() {
        let text = "Optimal - objective value 12.00000000\n\
                    \x20     0 x_0                      4                       0\n\
                    \x20     1 x_1                      0                       1\n";
        let s = parse_solution(text, &model()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.values[0], 4.0);
        let text = "Infeasible - objective value 0.00000000\n** 0 x_0 5 0\n";
        let s = parse_solution(text, &model()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert_eq!(s.values[0], 5.0);
        let text = "Stopped on time - objective value 3\n";
        assert_eq!(
            parse_solution(text, &model()).unwrap().status,
            SolveStatus::Stopped
        );
    }

    #[test]
    fn errors() {
        let err = parse_solution("Optimal\nobj 1\nz 3\n", &model()).unwrap_err();
        assert_eq!(err, SolutionError::UnknownVariableName("z".into()));
        let err = parse_solution("Optimal\nobj 1\nx_0 three\n", &model()).unwrap_err();
        assert!(matches!(
            err,
            SolutionError::UnparseableSolution { line: 3, .. }
        ));
        assert!(parse_solution("", &model()).is_err());
    }
}
