use std::path::PathBuf;
use std::time::Duration;

use indexmap::IndexMap;
use serde::Deserialize;

use super::process::run_limited;
use super::{
    Backend, BackendError, ExecFailure, ExecStatus, ExecutionJob, ExecutionResult, FailureKind,
    Limits, PROTOCOL_VERSION,
};

pub const RUNNER_INSTALL_HINT: &str = "install the script runner and put `runner` on PATH, \
     or point runner_cmd / --runner-cmd at it; see docs/runner-protocol.md";

/// Seconds granted beyond the job's own wall limit before the runner is killed.
const GRACE_SECS: u64 = 5;

/// Backend for the script target: the job is piped to an external runner
/// speaking the JSON protocol in `docs/runner-protocol.md`.
#[derive(Debug, Clone)]
pub struct ScriptBackend {
    runner_cmd: String,
    work_dir: PathBuf,
}

#[derive(Deserialize)]
struct WireFailure {
    #[serde(default)]
    entity: Option<String>,
    #[serde(default)]
    kind: Option<FailureKind>,
    message: String,
}

#[derive(Deserialize)]
struct WireResult {
    protocol: u32,
    status: ExecStatus,
    #[serde(default)]
    objective: Option<f64>,
    #[serde(default)]
    values: IndexMap<String, f64>,
    #[serde(default)]
    error: Option<WireFailure>,
}

impl ScriptBackend {
    pub fn new(runner_cmd: impl Into<String>) -> Self {
        ScriptBackend {
            runner_cmd: runner_cmd.into(),
            work_dir: std::env::temp_dir(),
        }
    }

    pub fn with_work_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.work_dir = dir.into();
        self
    }
}

/// Decode a runner's stdout into a result; anything malformed is a protocol
/// error not attributed to any entity.
pub fn decode_result(stdout: &str) -> ExecutionResult {
    let protocol_error =
        |msg: String| ExecutionResult::failure(None, FailureKind::ProtocolError, msg);
    let wire: WireResult = match serde_json::from_str(stdout.trim()) {
        Ok(w) => w,
        Err(e) => return protocol_error(format!("runner output is not a valid result: {e}")),
    };
    if wire.protocol != PROTOCOL_VERSION {
        return protocol_error(format!(
            "runner speaks protocol {}, expected {PROTOCOL_VERSION}",
            wire.protocol
        ));
    }
    if wire.status == ExecStatus::Optimal && wire.objective.is_none() {
        return protocol_error("optimal result without an objective".into());
    }
    if wire.status == ExecStatus::Error && wire.error.is_none() {
        return protocol_error("error result without an error object".into());
    }
    ExecutionResult {
        status: wire.status,
        objective: wire.objective,
        values: wire.values,
        error: wire.error.map(|e| ExecFailure {
            entity: e.entity,
            kind: e.kind.unwrap_or(FailureKind::Runtime),
            message: e.message,
        }),
    }
}

impl Backend for ScriptBackend {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionResult, BackendError> {
        let mut argv = shell_words::split(&self.runner_cmd)
            .map_err(|e| BackendError::RunnerUnavailable(format!("bad runner command: {e}")))?;
        if argv.is_empty() {
            return Err(BackendError::RunnerUnavailable(RUNNER_INSTALL_HINT.into()));
        }
        argv.push("--job".into());
        argv.push("-".into());
        let input = serde_json::to_vec(job).map_err(|e| BackendError::Io(e.to_string()))?;
        let limits = Limits {
            wall_secs: job.limits.wall_secs + GRACE_SECS,
            memory_mb: job.limits.memory_mb + 512,
        };
        let out = run_limited(
            &argv,
            &self.work_dir,
            Some(&input),
            &limits,
            Duration::from_secs(limits.wall_secs),
        );
        match out {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(
                BackendError::RunnerUnavailable(format!("`{}` not found; {RUNNER_INSTALL_HINT}", argv[0])),
            ),
            Err(e) => Err(BackendError::RunnerUnavailable(e.to_string())),
            Ok(out) if out.timed_out => Ok(ExecutionResult::status_only(ExecStatus::Timeout)),
            Ok(out) if out.stdout.trim().is_empty() => Ok(ExecutionResult::failure(
                None,
                FailureKind::ProtocolError,
                format!(
                    "runner produced no result (exit {:?}): {}",
                    out.code,
                    out.stderr.lines().last().unwrap_or("")
                ),
            )),
            Ok(out) => Ok(decode_result(&out.stdout)),
        }
    }
}
