#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use nl2milp::agents::{run_pipeline, RunRecord, RunSettings};
use nl2milp::amdl::{compile_program, oracle_solve, FlatModel, OracleOutcome};
use nl2milp::config::DEFAULT_MODEL;
use nl2milp::execution::AmdlBackend;
use nl2milp::llm::{LlmClient, Mode, PromptLibrary, ScriptedTransport, TranscriptStore};
use nl2milp::model::DataBundle;
use nl2milp::preprocess::RawProblem;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixtures() -> PathBuf {
    root().join("fixtures")
}

pub fn instance_dir(group: &str, id: &str) -> PathBuf {
    fixtures().join(group).join("instances").join(id)
}

pub fn solver_cmd() -> String {
    format!(
        "python3 {} {{lp}} {{sol}}",
        root().join("tools/scipy_lp_solver.py").display()
    )
}

/// Panics with a clear message when python3 with scipy is missing: the
/// fixture runs need a real solver.
pub fn require_solver() {
    let ok = Command::new("python3")
        .args(["-c", "import scipy.optimize"])
        .status()
        .is_ok_and(|s| s.success());
    assert!(ok, "python3 with scipy is required for solver-backed tests");
}

pub fn backend() -> AmdlBackend {
    require_solver();
    AmdlBackend::new(Some(solver_cmd()))
}

pub fn replay_client(group: &str) -> LlmClient {
    let store = TranscriptStore::open_existing(fixtures().join(group).join("transcripts"))
        .expect("transcripts exist");
    LlmClient::replay(DEFAULT_MODEL, store)
}

pub fn script(group: &str, id: &str) -> ScriptedTransport {
    let path = fixtures().join(group).join("answers").join(format!("{id}.json"));
    ScriptedTransport::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn live_client(t: ScriptedTransport) -> LlmClient {
    LlmClient::new(Mode::Live, DEFAULT_MODEL).with_transport(Arc::new(t))
}

pub fn raw(group: &str, id: &str) -> RawProblem {
    RawProblem::from_dir(&instance_dir(group, id)).unwrap()
}

pub fn replay_run(group: &str, id: &str, settings: RunSettings) -> RunRecord {
    let llm = replay_client(group);
    run_pipeline(&raw(group, id), &llm, &backend(), &PromptLibrary::builtin(), settings)
}

pub fn truth(group: &str, id: &str) -> f64 {
    std::fs::read_to_string(instance_dir(group, id).join("optimal_value.txt"))
        .unwrap()
        .trim()
        .parse()
        .unwrap()
}

pub fn reference_model(group: &str, id: &str) -> FlatModel {
    let path = fixtures().join(group).join("references").join(format!("{id}.amdl"));
    compile_program(&std::fs::read_to_string(path).unwrap(), &DataBundle::default()).unwrap()
}

pub fn oracle_objective(model: &FlatModel) -> f64 {
    match oracle_solve(model).expect("model within oracle scope") {
        OracleOutcome::Optimal { objective, .. } => objective,
        other => panic!("oracle: {other:?}"),
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// The final program of a run: every snippet in job order, compiled with
/// the run's data.
pub fn final_program(record: &RunRecord) -> FlatModel {
    use nl2milp::execution::{compile_job, CodeTarget, ExecutionJob, Limits};
    let problem = record.problem.as_ref().expect("run reached the agents");
    let job = ExecutionJob::from_problem(problem, CodeTarget::Amdl, Limits::default()).unwrap();
    compile_job(&job).expect("final program compiles")
}

pub const MINI: [&str; 6] = [
    "bakery",
    "blend",
    "capital_budgeting",
    "diet",
    "factory",
    "staffing",
];
