use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{
    evaluate, formulate, manager_step, program, technique_pass, AgentError, AgentKind,
    AgentMessage, Decision, Event, FailStage, Outcome, PipelineState, RunSettings, Sender,
};
use crate::execution::{Backend, ExecStatus};
use crate::llm::{LlmClient, LlmError, Message, PromptLibrary, PromptRecord, TemplateError};
use crate::model::{ClauseStatus, ModelError, StructuredProblem};
use crate::preprocess::{PreprocessError, PreprocessReport, Preprocessor, RawProblem};

/// What the agents share: the LLM, the execution backend, the prompts and
/// the run settings.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub llm: &'a LlmClient,
    pub backend: &'a dyn Backend,
    pub prompts: &'a PromptLibrary,
    pub settings: RunSettings,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub outcome: Outcome,
    pub calls_used: IndexMap<AgentKind, u32>,
    pub total_calls: u32,
    pub budget: u32,
    /// Problem as handed to the agents.
    pub initial: Option<StructuredProblem>,
    /// Problem when the run stopped.
    pub problem: Option<StructuredProblem>,
    pub report: Option<PreprocessReport>,
    pub events: Vec<Event>,
    pub conversation: Vec<AgentMessage>,
    pub prompts: Vec<PromptRecord>,
    pub last_status: Option<ExecStatus>,
    pub fix_attempts: u32,
}

impl RunRecord {
    fn failed_early(stage: FailStage, message: String, budget: u32, prompts: Vec<PromptRecord>) -> Self {
        RunRecord {
            outcome: Outcome::Failed { stage, message },
            calls_used: AgentKind::ALL.iter().map(|a| (*a, 0)).collect(),
            total_calls: 0,
            budget,
            initial: None,
            problem: None,
            report: None,
            events: Vec::new(),
            conversation: Vec::new(),
            prompts,
            last_status: None,
            fix_attempts: 0,
        }
    }

    /// The event log, one JSON object per line.
    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }

    /// Replay every logged mutation on the initial problem.
    pub fn reconstruct(&self) -> Result<Option<StructuredProblem>, ModelError> {
        let Some(mut p) = self.initial.clone() else {
            return Ok(None);
        };
        for m in self.events.iter().flat_map(|e| &e.mutations) {
            p.apply(m)?;
        }
        Ok(Some(p))
    }
}

fn preprocess_stage(e: &PreprocessError) -> FailStage {
    match e {
        PreprocessError::Llm(LlmError::ReplayMiss { .. }) => FailStage::ReplayMiss,
        _ => FailStage::Preprocess,
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(
        llm: &'a LlmClient,
        backend: &'a dyn Backend,
        prompts: &'a PromptLibrary,
        settings: RunSettings,
    ) -> Self {
        Pipeline {
            llm,
            backend,
            prompts,
            settings,
        }
    }

    /// System prompt plus one rendered user message.
    pub fn messages(&self, template: &str, vars: &[(&str, &str)]) -> Result<Vec<Message>, TemplateError> {
        Ok(vec![
            Message::system(self.prompts.get("system")?),
            Message::user(self.prompts.render(template, vars)?),
        ])
    }

    fn chars_since(&self, mark: usize) -> usize {
        self.llm.prompts()[mark..].iter().map(|p| p.chars).sum()
    }

    /// Preprocess `raw`, then run the agents.
    pub fn run(&self, raw: &RawProblem) -> RunRecord {
        let pre = Preprocessor {
            llm: self.llm,
            prompts: self.prompts,
            config: self.settings.preprocess,
        };
        match pre.run(raw) {
            Ok((problem, report)) => {
                let mut record = self.run_agents(problem);
                record.report = Some(report);
                record
            }
            Err(e) => RunRecord::failed_early(
                preprocess_stage(&e),
                e.to_string(),
                self.settings.budget,
                self.llm.prompts(),
            ),
        }
    }

    /// Run the manager loop on an already structured problem.
    pub fn run_agents(&self, problem: StructuredProblem) -> RunRecord {
        let mut state = PipelineState::new(problem.clone(), self.settings.budget);
        let outcome = self.drive(&mut state);
        RunRecord {
            outcome,
            calls_used: state.calls_used.clone(),
            total_calls: state.total_calls(),
            budget: state.budget,
            initial: Some(problem),
            last_status: state.last_eval.as_ref().map(|e| e.status),
            problem: Some(state.problem),
            report: None,
            events: state.events,
            conversation: state.conversation,
            prompts: self.llm.prompts(),
            fix_attempts: state.fix_attempts,
        }
    }

    fn drive(&self, state: &mut PipelineState) -> Outcome {
        loop {
            let mark = self.llm.prompts().len();
            let (decision, fell_back) = match manager_step(state, self) {
                Ok(d) => d,
                Err(AgentError::BudgetExhausted(n)) => {
                    let chars = self.chars_since(mark);
                    state.log_event("manager", "stop", &[], chars, format!("budget of {n} calls exhausted"));
                    return Outcome::BudgetExhausted;
                }
                Err(e) => {
                    let chars = self.chars_since(mark);
                    state.log_event("manager", "stop", &[], chars, format!("error: {e}"));
                    return Outcome::Failed {
                        stage: e.fail_stage(),
                        message: e.to_string(),
                    };
                }
            };
            let chars = self.chars_since(mark);
            let note = if fell_back { " (rule-based fallback)" } else { "" };
            let task = match decision {
                Decision::Done { reason } => {
                    state.say(Sender::Manager, format!("done: {reason}"), None);
                    let outcome = match &state.last_eval {
                        Some(e) if e.status == ExecStatus::Optimal && e.revision == state.code_revision => {
                            Outcome::Solved {
                                objective: e.objective.unwrap_or_default(),
                                values: e.values.clone(),
                            }
                        }
                        _ => Outcome::Failed {
                            stage: FailStage::NoSolution,
                            message: format!("manager stopped without a solution: {reason}"),
                        },
                    };
                    state.log_event("manager", "done", &[], chars, format!("{}{note}", outcome.label()));
                    return outcome;
                }
                Decision::Act { task } => task,
            };
            state.say(Sender::Manager, task.to_string(), None);
            state.log_event(
                "manager",
                &format!("assign {}", task.agent),
                &task.targets,
                chars,
                format!("{}{note}", task.instruction),
            );

            *state.calls_used.entry(task.agent).or_insert(0) += 1;
            let mark = self.llm.prompts().len();
            let result = match task.agent {
                AgentKind::Formulator => formulate(state, &task, self),
                AgentKind::Programmer => program(state, &task, self),
                AgentKind::Evaluator => evaluate(state, &task, self),
            };
            let chars = self.chars_since(mark);
            let agent = task.agent.to_string();
            match result {
                Ok(outcome) => state.log_event(&agent, &task.instruction, &task.targets, chars, outcome),
                Err(e) if !e.is_fatal() => {
                    state.say(Sender::from(task.agent), format!("refused: {e}"), None);
                    state.log_event(&agent, &task.instruction, &task.targets, chars, format!("refused: {e}"));
                }
                Err(e) => {
                    state.log_event(&agent, &task.instruction, &task.targets, chars, format!("error: {e}"));
                    return Outcome::Failed {
                        stage: e.fail_stage(),
                        message: e.to_string(),
                    };
                }
            }

            let all_formulated = !state
                .problem
                .clauses()
                .any(|c| matches!(c.status, ClauseStatus::Described | ClauseStatus::FormulationFlagged));
            if self.settings.techniques
                && !state.techniques_done
                && task.agent == AgentKind::Formulator
                && all_formulated
            {
                let mark = self.llm.prompts().len();
                let result = technique_pass(state, self);
                let chars = self.chars_since(mark);
                match result {
                    Ok(outcome) => state.log_event("technique", "structure pass", &[], chars, outcome),
                    Err(e) => {
                        state.log_event("technique", "structure pass", &[], chars, format!("error: {e}"));
                        if e.is_fatal() {
                            return Outcome::Failed {
                                stage: e.fail_stage(),
                                message: e.to_string(),
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Convenience wrapper over [`Pipeline::run`].
pub fn run_pipeline(
    raw: &RawProblem,
    llm: &LlmClient,
    backend: &dyn Backend,
    prompts: &PromptLibrary,
    settings: RunSettings,
) -> RunRecord {
    Pipeline::new(llm, backend, prompts, settings).run(raw)
}
