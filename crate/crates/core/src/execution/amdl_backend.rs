use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use indexmap::IndexMap;

use super::process::run_limited;
use super::{
    Backend, BackendError, EntityKind, ExecStatus, ExecutionJob, ExecutionResult, FailureKind,
};
use crate::amdl::{
    check, emit_lp, expand, parse_amdl, parse_solution, FlatModel, ProgramItem, SolveStatus,
    Statement, StatementKind, FEASIBILITY_TOL,
};

/// Backend for the AMDL target: snippets are parsed and expanded here, the
/// LP file goes to an external solver command.
///
/// The command is split shell-style. `{lp}` and `{sol}` are replaced by the
/// model and solution paths; without placeholders both paths are appended.
#[derive(Debug)]
pub struct AmdlBackend {
    solver_cmd: Option<String>,
    work_root: Option<PathBuf>,
    keep_artifacts: bool,
    kept: Mutex<Vec<PathBuf>>,
}

impl AmdlBackend {
    pub fn new(solver_cmd: Option<String>) -> Self {
        AmdlBackend {
            solver_cmd,
            work_root: None,
            keep_artifacts: false,
            kept: Mutex::new(Vec::new()),
        }
    }

    /// Create per-job directories under `root` instead of the system temp dir.
    pub fn with_work_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.work_root = Some(root.into());
        self
    }

    pub fn keep_artifacts(mut self, keep: bool) -> Self {
        self.keep_artifacts = keep;
        self
    }

    /// Directories kept because of [`AmdlBackend::keep_artifacts`].
    pub fn kept_artifacts(&self) -> Vec<PathBuf> {
        self.kept.lock().expect("artifact list lock").clone()
    }

    fn command(&self, lp: &str, sol: &str) -> Result<Vec<String>, BackendError> {
        let template = self
            .solver_cmd
            .as_deref()
            .filter(|s| !s.trim().is_empty())
            .ok_or(BackendError::SolverNotConfigured)?;
        let mut argv = shell_words::split(template)
            .map_err(|e| BackendError::Io(format!("bad solver command: {e}")))?;
        if template.contains("{lp}") || template.contains("{sol}") {
            for a in &mut argv {
                *a = a.replace("{lp}", lp).replace("{sol}", sol);
            }
        } else {
            argv.push(lp.to_string());
            argv.push(sol.to_string());
        }
        Ok(argv)
    }
}

/// Parse and expand the job's snippets. Failures come back as an error
/// result attributed to the first offending entity in job order.
pub fn compile_job(job: &ExecutionJob) -> Result<FlatModel, ExecutionResult> {
    let variables: Vec<&str> = job
        .entities
        .iter()
        .filter(|e| e.kind == EntityKind::Variable)
        .map(|e| e.id.as_str())
        .collect();
    let mut items = Vec::new();
    for e in &job.entities {
        let fail = |msg: String| {
            ExecutionResult::failure(Some(e.id.clone()), FailureKind::Syntax, msg)
        };
        let statement = parse_amdl(&e.code, &variables).map_err(|err| fail(err.to_string()))?;
        let expected = match e.kind {
            EntityKind::Variable => StatementKind::Variable,
            EntityKind::Objective => StatementKind::Objective,
            EntityKind::Constraint => StatementKind::Constraint,
        };
        if statement.kind() != expected {
            return Err(fail(format!(
                "expected a {} statement, found a {} statement",
                kind_label(expected),
                kind_label(statement.kind())
            )));
        }
        if let Statement::Var(v) = &statement {
            if v.name != e.id {
                return Err(fail(format!(
                    "declares `{}` but belongs to variable `{}`",
                    v.name, e.id
                )));
            }
        }
        items.push(ProgramItem {
            origin: e.id.clone(),
            statement,
        });
    }
    expand(&items, &job.data).map_err(|err| {
        let entity = (!err.origin.is_empty()).then(|| err.origin.clone());
        ExecutionResult::failure(entity, FailureKind::Semantic, err.kind.to_string())
    })
}

fn kind_label(k: StatementKind) -> &'static str {
    match k {
        StatementKind::Variable => "variable declaration",
        StatementKind::Objective => "objective",
        StatementKind::Constraint => "constraint",
    }
}

fn tail(s: &str, n: usize) -> String {
    let lines: Vec<&str> = s.lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

impl Backend for AmdlBackend {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionResult, BackendError> {
        let model = match compile_job(job) {
            Ok(m) => m,
            Err(result) => return Ok(result),
        };
        let lp = match emit_lp(&model) {
            Ok(lp) => lp,
            Err(e) => {
                return Ok(ExecutionResult::failure(
                    None,
                    FailureKind::Semantic,
                    e.to_string(),
                ))
            }
        };
        // resolve the command before touching the filesystem
        self.command("", "")?;

        let mut builder = tempfile::Builder::new();
        builder.prefix("nl2milp-");
        let dir = match &self.work_root {
            Some(root) => builder.tempdir_in(root),
            None => builder.tempdir(),
        }
        .map_err(|e| BackendError::Io(e.to_string()))?;
        let lp_path = dir.path().join("model.lp");
        let sol_path = dir.path().join("solution.txt");
        std::fs::write(&lp_path, &lp).map_err(|e| BackendError::Io(e.to_string()))?;
        let argv = self.command(
            &lp_path.to_string_lossy(),
            &sol_path.to_string_lossy(),
        )?;

        let cwd = std::env::current_dir().unwrap_or_else(|_| dir.path().to_path_buf());
        let out = run_limited(
            &argv,
            &cwd,
            None,
            &job.limits,
            Duration::from_secs(job.limits.wall_secs),
        );
        let result = match out {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::Io(format!(
                    "solver executable `{}` not found",
                    argv[0]
                )))
            }
            Err(e) => ExecutionResult::failure(None, FailureKind::SolverCrashed, e.to_string()),
            Ok(out) if out.timed_out => ExecutionResult::status_only(ExecStatus::Timeout),
            Ok(out) if out.code != Some(0) => ExecutionResult::failure(
                None,
                FailureKind::SolverCrashed,
                format!(
                    "solver exited with {}: {}",
                    out.code.map_or("a signal".to_string(), |c| format!("status {c}")),
                    tail(&out.stderr, 5)
                ),
            ),
            Ok(_) => match std::fs::read_to_string(&sol_path) {
                Err(e) => ExecutionResult::failure(
                    None,
                    FailureKind::SolverCrashed,
                    format!("no solution file: {e}"),
                ),
                Ok(text) => interpret(&model, &text),
            },
        };
        if self.keep_artifacts {
            let path = dir.keep();
            log::info!("kept solver artifacts in {}", path.display());
            self.kept.lock().expect("artifact list lock").push(path);
        }
        Ok(result)
    }
}

/// Turn a solution file into a result. Optimal answers are re-checked
/// against the model and the objective is recomputed from the values.
pub fn interpret(model: &FlatModel, text: &str) -> ExecutionResult {
    let sol = match parse_solution(text, model) {
        Ok(s) => s,
        Err(e) => return ExecutionResult::failure(None, FailureKind::SolverCrashed, e.to_string()),
    };
    match sol.status {
        SolveStatus::Infeasible => ExecutionResult::status_only(ExecStatus::Infeasible),
        SolveStatus::Unbounded => ExecutionResult::status_only(ExecStatus::Unbounded),
        SolveStatus::Stopped => ExecutionResult::status_only(ExecStatus::Timeout),
        SolveStatus::Optimal => {
            let report = check(model, &sol.values);
            if report.max_violation > FEASIBILITY_TOL {
                return ExecutionResult::failure(
                    None,
                    FailureKind::SolverCrashed,
                    format!(
                        "solver answer violates {} by {:e}",
                        report.worst.unwrap_or_default(),
                        report.max_violation
                    ),
                );
            }
            let values: IndexMap<String, f64> = model
                .vars
                .iter()
                .zip(&sol.values)
                .map(|(v, x)| (v.name.clone(), *x))
                .collect();
            ExecutionResult::optimal(model.objective_value(&sol.values), values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::execution::{JobEntity, Limits, CodeTarget, PROTOCOL_VERSION};
    use crate::model::DataBundle;

    fn job(entities: &[(&str, EntityKind, &str)]) -> ExecutionJob {
        ExecutionJob {
            protocol: PROTOCOL_VERSION,
            code_target: CodeTarget::Amdl,
            data: DataBundle::from_json(r#"{"dimensions":{"P":2},"values":{"Profit":[3,2]}}"#)
                .unwrap(),
            entities: entities
                .iter()
                .map(|(id, kind, code)| JobEntity {
                    id: id.to_string(),
                    kind: *kind,
                    code: code.to_string(),
                })
                .collect(),
            limits: Limits::default(),
        }
    }

    #[test]
    fn attribution_follows_job_order() {
        let j = job(&[
            ("x", EntityKind::Variable, "var x{p in P};"),
            ("obj", EntityKind::Objective, "maximize: sum(p in P) Profit[p]*x[p];"),
            ("c1", EntityKind::Constraint, "x[0] <= Missing;"),
            ("c2", EntityKind::Constraint, "x[0] <= ;"),
        ]);
        let r = compile_job(&j).unwrap_err();
        assert_eq!(r.blamed(), Some("c2"));
        assert_eq!(r.error.as_ref().unwrap().kind, FailureKind::Syntax);

        let j = job(&[
            ("x", EntityKind::Variable, "var x{p in P};"),
            ("obj", EntityKind::Objective, "maximize: sum(p in P) Profit[p]*x[p];"),
            ("c1", EntityKind::Constraint, "x[0] <= Missing;"),
        ]);
        let r = compile_job(&j).unwrap_err();
        assert_eq!(r.blamed(), Some("c1"));
        assert_eq!(r.error.as_ref().unwrap().kind, FailureKind::Semantic);
    }

    #[test]
    fn statement_kind_must_match() {
        let j = job(&[
            ("x", EntityKind::Variable, "var x;"),
            ("obj", EntityKind::Objective, "x <= 3;"),
        ]);
        assert_eq!(compile_job(&j).unwrap_err().blamed(), Some("obj"));
        let j = job(&[("x", EntityKind::Variable, "var y;")]);
        assert_eq!(compile_job(&j).unwrap_err().blamed(), Some("x"));
    }

    #[test]
    fn unconfigured_solver_is_fatal() {
        let j = job(&[
            ("x", EntityKind::Variable, "var x <= 1;"),
            ("obj", EntityKind::Objective, "maximize: x;"),
        ]);
        let err = AmdlBackend::new(None).execute(&j).unwrap_err();
        assert_eq!(err, BackendError::SolverNotConfigured);
    }

    #[test]
    fn interpret_rechecks_answers() {
        let m = crate::amdl::compile_program("var x <= 1;\nmaximize: 2*x;", &DataBundle::default()).unwrap();
        let r = interpret(&m, "Optimal\nobj 2\nx 1\n");
        assert_eq!(r.objective, Some(2.0));
        let r = interpret(&m, "Optimal\nobj 4\nx 2\n");
        assert_eq!(r.status, ExecStatus::Error);
        assert_eq!(r.blamed(), None);
        assert_eq!(interpret(&m, "Infeasible\n").status, ExecStatus::Infeasible);
    }
}
