//! Running generated code: assembling a job from the structured problem,
//! executing it on a backend, and attributing failures to entities.

mod amdl_backend;
mod mock;
mod process;
mod script;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClauseKind, DataBundle, StructuredProblem};

pub use amdl_backend::AmdlBackend;
pub use mock::MockBackend;
pub use process::{run_limited, ProcessOutput};
pub use amdl_backend::{compile_job, interpret};
pub use script::{decode_result, ScriptBackend, RUNNER_INSTALL_HINT};

/// Version of the runner job/result protocol.
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CodeTarget {
    #[default]
    Amdl,
    Script,
}

impl fmt::Display for CodeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodeTarget::Amdl => "amdl",
            CodeTarget::Script => "script",
        })
    }
}

impl FromStr for CodeTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "amdl" => Ok(CodeTarget::Amdl),
            "script" => Ok(CodeTarget::Script),
            other => Err(format!("unknown code target `{other}` (amdl or script)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub wall_secs: u64,
    pub memory_mb: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            wall_secs: 30,
            memory_mb: 2048,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Variable,
    Objective,
    Constraint,
}

/// One code snippet of the job: a variable declaration or a clause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEntity {
    pub id: String,
    pub kind: EntityKind,
    pub code: String,
}

/// Everything needed to execute a model, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionJob {
    pub protocol: u32,
    pub code_target: CodeTarget,
    pub data: DataBundle,
    pub entities: Vec<JobEntity>,
    pub limits: Limits,
}

/// Order of clause ids: `obj` first, then `c<N>` by number, anything else
/// lexicographically after.
pub fn clause_order(a: &str, b: &str) -> Ordering {
    fn key(id: &str) -> (u8, u64, &str) {
        if id == "obj" {
            return (0, 0, id);
        }
        match id.strip_prefix('c').and_then(|n| n.parse::<u64>().ok()) {
            Some(n) => (1, n, id),
            None => (2, 0, id),
        }
    }
    key(a).cmp(&key(b))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JobError {
    #[error("variable `{0}` has no code")]
    UncodedVariable(String),
    #[error("clause `{0}` has no code")]
    UncodedClause(String),
}

impl ExecutionJob {
    /// Collect the code of every variable and clause: variables first (in
    /// problem order), then clauses in [`clause_order`].
    pub fn from_problem(
        problem: &StructuredProblem,
        target: CodeTarget,
        limits: Limits,
    ) -> Result<Self, JobError> {
        let mut entities = Vec::new();
        for v in problem.variables() {
            let code = v
                .code
                .clone()
                .ok_or_else(|| JobError::UncodedVariable(v.symbol.clone()))?;
            entities.push(JobEntity {
                id: v.symbol.clone(),
                kind: EntityKind::Variable,
                code,
            });
        }
        let mut clauses: Vec<_> = problem.clauses().collect();
        clauses.sort_by(|a, b| clause_order(&a.id, &b.id));
        for c in clauses {
            let code = c
                .code
                .clone()
                .ok_or_else(|| JobError::UncodedClause(c.id.clone()))?;
            entities.push(JobEntity {
                id: c.id.clone(),
                kind: match c.kind {
                    ClauseKind::Objective => EntityKind::Objective,
                    ClauseKind::Constraint => EntityKind::Constraint,
                },
                code,
            });
        }
        Ok(ExecutionJob {
            protocol: PROTOCOL_VERSION,
            code_target: target,
            data: problem.data.clone().unwrap_or_default(),
            entities,
            limits,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Error,
    Timeout,
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecStatus::Optimal => "optimal",
            ExecStatus::Infeasible => "infeasible",
            ExecStatus::Unbounded => "unbounded",
            ExecStatus::Error => "error",
            ExecStatus::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The snippet does not parse or has the wrong statement kind.
    Syntax,
    /// The snippet parsed but could not be expanded (unknown symbol, bad index...).
    Semantic,
    /// The solver process failed or produced no usable answer.
    SolverCrashed,
    /// The runner answered with something that is not a valid result.
    ProtocolError,
    /// Error raised while running a script snippet.
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecFailure {
    /// Entity id the failure is attributed to, when known.
    #[serde(default)]
    pub entity: Option<String>,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default)]
    pub values: IndexMap<String, f64>,
    #[serde(default)]
    pub error: Option<ExecFailure>,
}

impl ExecutionResult {
    pub fn failure(entity: Option<String>, kind: FailureKind, message: impl Into<String>) -> Self {
        ExecutionResult {
            status: ExecStatus::Error,
            objective: None,
            values: IndexMap::new(),
            error: Some(ExecFailure {
                entity,
                kind,
                message: message.into(),
            }),
        }
    }

    pub fn status_only(status: ExecStatus) -> Self {
        ExecutionResult {
            status,
            objective: None,
            values: IndexMap::new(),
            error: None,
        }
    }

    pub fn optimal(objective: f64, values: IndexMap<String, f64>) -> Self {
        ExecutionResult {
            status: ExecStatus::Optimal,
            objective: Some(objective),
            values,
            error: None,
        }
    }

    /// Entity blamed for the failure, if any.
    pub fn blamed(&self) -> Option<&str> {
        self.error.as_ref().and_then(|e| e.entity.as_deref())
    }
}

/// Failures that make further evaluation pointless: the backend itself is
/// missing or misconfigured.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("no solver command configured (set solver_cmd in the config, NL2MILP_SOLVER_CMD, or --solver-cmd)")]
    SolverNotConfigured,
    #[error("runner unavailable: {0}")]
    RunnerUnavailable(String),
    #[error("mock backend has no scripted result left")]
    ScriptExhausted,
    #[error("backend I/O error: {0}")]
    Io(String),
}

pub trait Backend: Send + Sync {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionResult, BackendError>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Clause, Domain, Variable};

    #[test]
    fn canonical_clause_order() {
        let mut ids = vec!["c10", "c2", "obj", "c1", "aux"];
        ids.sort_by(|a, b| clause_order(a, b));
        assert_eq!(ids, ["obj", "c1", "c2", "c10", "aux"]);
    }

    #[test]
    fn job_collects_code_in_order() {
        let mut p = StructuredProblem::new("bg");
        p.add_entity(Variable::new("x", vec![], Domain::Continuous, "amount"))
            .unwrap();
        p.add_entity(Clause::constraint("c2", "second")).unwrap();
        p.add_entity(Clause::objective("goal")).unwrap();
        p.add_entity(Clause::constraint("c1", "first")).unwrap();
        p.set_variable_code("x", "var x;".into()).unwrap();
        for (id, code) in [("c2", "x <= 2;"), ("obj", "maximize: x;"), ("c1", "x <= 1;")] {
            p.set_clause_code(id, code.into()).unwrap();
        }
        let job = ExecutionJob::from_problem(&p, CodeTarget::Amdl, Limits::default()).unwrap();
        let ids: Vec<&str> = job.entities.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["x", "obj", "c1", "c2"]);
        assert_eq!(job.entities[1].kind, EntityKind::Objective);
        let json = serde_json::to_value(&job).unwrap();
        assert_eq!(json["protocol"], 1);
    }
}
