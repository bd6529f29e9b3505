//! Batch evaluation over a dataset of instances with known optima.

mod dataset;
mod report;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{FailStage, Outcome, Pipeline, RunRecord, RunSettings};
use crate::execution::{Backend, ExecStatus};
use crate::llm::{LlmClient, PromptLibrary};
use crate::preprocess::RawProblem;

pub use dataset::{
    load_dataset, load_instance, DatasetError, FailureCategory, Instance, INSTANCES_DIR,
    LABEL_FILE, TRANSCRIPTS_DIR,
};
pub use report::{Report, Row};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-4, abs: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    Correct,
    Incorrect,
    Failed,
}

/// Correct iff solved within `max(abs, rel * |truth|)` of the truth.
pub fn score(outcome: &Outcome, truth: f64, tol: Tolerance) -> Score {
    match outcome.objective() {
        Some(obj) if (obj - truth).abs() <= tol.abs.max(tol.rel * truth.abs()) => Score::Correct,
        Some(_) => Score::Incorrect,
        None => Score::Failed,
    }
}

/// Failure category of a run that was not correct. A label on the instance
/// always wins.
pub fn classify_failure(record: &RunRecord, instance: &Instance) -> FailureCategory {
    if let Some(label) = instance.label {
        return label;
    }
    if matches!(record.outcome, Outcome::Solved { .. }) {
        return FailureCategory::IncorrectModeling;
    }
    match record.last_status {
        Some(ExecStatus::Error | ExecStatus::Timeout) => FailureCategory::CodingErrors,
        Some(ExecStatus::Infeasible | ExecStatus::Unbounded) => FailureCategory::IncorrectModeling,
        _ => FailureCategory::Unlabeled,
    }
}

/// Builds the LLM client for one instance.
pub type ClientFactory<'a> = dyn Fn(&Instance) -> Result<LlmClient, String> + Sync + 'a;

pub struct BenchConfig {
    pub settings: RunSettings,
    pub tolerance: Tolerance,
    /// Worker threads; 0 means one per instance up to the CPU count.
    pub parallel: usize,
}

fn failed_row(instance: &Instance, stage: FailStage, message: String, wall_ms: u64) -> Row {
    let record = RunRecord {
        outcome: Outcome::Failed { stage, message },
        calls_used: Default::default(),
        total_calls: 0,
        budget: 0,
        initial: None,
        problem: None,
        report: None,
        events: Vec::new(),
        conversation: Vec::new(),
        prompts: Vec::new(),
        last_status: None,
        fix_attempts: 0,
    };
    Row::new(instance, &record, Tolerance::default(), wall_ms)
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Run one instance; never panics.
pub fn run_instance(
    instance: &Instance,
    config: &BenchConfig,
    clients: &ClientFactory<'_>,
    backend: &dyn Backend,
    prompts: &PromptLibrary,
) -> (Row, Option<RunRecord>) {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<RunRecord, (FailStage, String)> {
        let raw = RawProblem::from_dir(&instance.dir).map_err(|e| (FailStage::Preprocess, e.to_string()))?;
        let llm = clients(instance).map_err(|e| (FailStage::Llm, e))?;
        Ok(Pipeline::new(&llm, backend, prompts, config.settings).run(&raw))
    }));
    let wall_ms = start.elapsed().as_millis() as u64;
    match result {
        Ok(Ok(record)) => (Row::new(instance, &record, config.tolerance, wall_ms), Some(record)),
        Ok(Err((stage, message))) => (failed_row(instance, stage, message, wall_ms), None),
        Err(p) => (
            failed_row(instance, FailStage::Internal, format!("panic: {}", panic_text(p)), wall_ms),
            None,
        ),
    }
}

/// Run every instance on a bounded pool and aggregate. Rows keep the
/// instance order.
pub fn run_benchmark(
    instances: &[Instance],
    config: &BenchConfig,
    clients: &ClientFactory<'_>,
    backend: &dyn Backend,
    prompts: &PromptLibrary,
) -> (Report, Vec<Option<RunRecord>>) {
    use rayon::prelude::*;

    let start = Instant::now();
    let width = if config.parallel == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.parallel
    }
    .clamp(1, instances.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .expect("benchmark thread pool");
    let results: Vec<(Row, Option<RunRecord>)> = pool.install(|| {
        instances
            .par_iter()
            .map(|i| run_instance(i, config, clients, backend, prompts))
            .collect()
    });
    let (rows, records): (Vec<Row>, Vec<Option<RunRecord>>) = results.into_iter().unzip();
    let prompts: Vec<_> = records
        .iter()
        .flatten()
        .flat_map(|r| r.prompts.iter().cloned())
        .collect();
    let mut report = Report::from_rows(config.settings, rows, &prompts);
    report.wall_ms = start.elapsed().as_millis() as u64;
    (report, records)
}
