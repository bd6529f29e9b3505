use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Backend, BackendError, ExecutionJob, ExecutionResult};

/// Backend returning pre-scripted results in order, recording every job.
#[derive(Debug, Default)]
pub struct MockBackend {
    results: Mutex<VecDeque<ExecutionResult>>,
    jobs: Mutex<Vec<ExecutionJob>>,
}

impl MockBackend {
    pub fn new(results: impl IntoIterator<Item = ExecutionResult>) -> Self {
        MockBackend {
            results: Mutex::new(results.into_iter().collect()),
            jobs: Mutex::new(Vec::new()),
        }
    }

    pub fn jobs(&self) -> Vec<ExecutionJob> {
        self.jobs.lock().expect("mock lock").clone()
    }
}

impl Backend for MockBackend {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionResult, BackendError> {
        self.jobs.lock().expect("mock lock").push(job.clone());
        self.results
            .lock()
            .expect("mock lock")
            .pop_front()
            .ok_or(BackendError::ScriptExhausted)
    }
}
