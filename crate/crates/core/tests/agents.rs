mod common;

use common::*;
use indexmap::IndexMap;
use nl2milp::agents::{
    evaluate, formulate, program, rule_based, AgentError, AgentKind, Decision, Evaluation,
    Pipeline, PipelineState, Policy, RunSettings, Task,
};
use nl2milp::amdl::{compile_program, oracle_solve, OracleOutcome};
use nl2milp::execution::{ExecStatus, ExecutionResult, FailureKind, MockBackend};
use nl2milp::llm::{PromptLibrary, ScriptedTransport};
use nl2milp::model::{
    Clause, ClauseStatus, DataBundle, Domain, StructuredProblem, Variable, VariableStatus,
};
use proptest::prelude::*;
use serde_json::{json, Value};

/// `obj: maximize x`, `c1: x at most 4`, nothing formulated yet.
fn tiny() -> StructuredProblem {
    let mut p = StructuredProblem::new("choose an amount");
    p.add_entity(Clause::objective("maximize the amount")).unwrap();
    p.add_entity(Clause::constraint("c1", "the amount is at most four")).unwrap();
    p.data = Some(DataBundle::default());
    p
}

fn tiny_answers() -> ScriptedTransport {
    tiny_answers_with("x <= 4;")
}

fn tiny_answers_with(c1_code: &str) -> ScriptedTransport {
    ScriptedTransport::new()
        .answer(
            "formulate/obj",
            [json!({
                "formulation": "\\max x",
                "related": ["x"],
                "new_variables": [{"symbol": "x", "shape": [], "domain": "continuous", "definition": "the amount"}]
            })],
        )
        .answer("formulate/c1", [json!({"formulation": "x \\le 4", "related": ["x"]})])
        .answer("code_variable/x", [json!({"code": "var x >= 0;"})])
        .answer("code_clause/obj", [json!({"code": "maximize: x;"})])
        .answer("code_clause/c1", [json!({"code": c1_code})])
}

fn task(agent: AgentKind, targets: &[&str]) -> Task {
    Task::new(agent, "do it", targets.iter().map(|s| s.to_string()).collect())
}

#[test]
fn auxiliary_constraint_is_added_formulated() {
    let t = ScriptedTransport::new().answer(
        "formulate/obj",
        [json!({
            "formulation": "\\max x - y",
            "related": ["x", "y"],
            "new_variables": [
                {"symbol": "x", "shape": [], "domain": "continuous", "definition": "the amount"},
                {"symbol": "y", "shape": [], "domain": "continuous", "definition": "the excess"}
            ],
            "auxiliary_constraints": [
                {"description": "the excess covers the amount above two", "formulation": "y \\ge x - 2", "related": ["x", "y"]}
            ]
        })],
    );
    let llm = live_client(t);
    let backend = MockBackend::new([]);
    let prompts = PromptLibrary::builtin();
    let ctx = Pipeline::new(&llm, &backend, &prompts, RunSettings::default());
    let mut state = PipelineState::new(tiny(), 10);
    let before = state.problem.clauses().len();
    formulate(&mut state, &task(AgentKind::Formulator, &["obj"]), &ctx).unwrap();
    assert_eq!(state.problem.clauses().len(), before + 1);
    let aux = state.problem.clause("c2").unwrap();
    assert_eq!(aux.status, ClauseStatus::Formulated);
    let mut edges: Vec<&str> = state.problem.graph().edges_of("c2").collect();
    edges.sort();
    assert_eq!(edges, ["x", "y"]);
}

#[test]
fn reformulation_replaces_edges() {
    let t = tiny_answers().answer(
        "reformulate/c1",
        [json!({"formulation": "x + y \\le 4", "related": ["x", "y"],
                "new_variables": [{"symbol": "y", "shape": [], "domain": "continuous", "definition": "slack"}]})],
    );
    let llm = live_client(t);
    let backend = MockBackend::new([]);
    let prompts = PromptLibrary::builtin();
    let ctx = Pipeline::new(&llm, &backend, &prompts, RunSettings::default());
    let mut state = PipelineState::new(tiny(), 10);
    formulate(&mut state, &task(AgentKind::Formulator, &[]), &ctx).unwrap();
    state.clause_to("c1", ClauseStatus::FormulationFlagged).unwrap();
    formulate(&mut state, &task(AgentKind::Formulator, &["c1"]), &ctx).unwrap();
    let c1 = state.problem.clause("c1").unwrap();
    assert_eq!(c1.status, ClauseStatus::Formulated);
    assert_eq!(c1.formulation.as_deref(), Some("x + y \\le 4"));
    let mut edges: Vec<&str> = state.problem.graph().edges_of("c1").collect();
    edges.sort();
    assert_eq!(edges, ["x", "y"]);
}

#[test]
fn programming_an_unformulated_clause_is_refused() {
    let llm = live_client(tiny_answers());
    let backend = MockBackend::new([]);
    let prompts = PromptLibrary::builtin();
    let ctx = Pipeline::new(&llm, &backend, &prompts, RunSettings::default());
    let mut state = PipelineState::new(tiny(), 10);
    let err = program(&mut state, &task(AgentKind::Programmer, &["c1"]), &ctx).unwrap_err();
    assert!(matches!(err, AgentError::Precondition(_)), "{err}");
    assert!(!err.is_fatal());
}

#[test]
fn fixing_replaces_the_flagged_snippet() {
    let t = tiny_answers_with("x <= Four;")
        .answer("debug/c1", [json!({"code": "x <= 4;"})]);
    let llm = live_client(t);
    let backend = MockBackend::new([ExecutionResult::failure(
        Some("c1".into()),
        FailureKind::Semantic,
        "unknown symbol `Four`",
    )]);
    let prompts = PromptLibrary::builtin();
    let ctx = Pipeline::new(&llm, &backend, &prompts, RunSettings::default());
    let mut state = PipelineState::new(tiny(), 10);
    formulate(&mut state, &task(AgentKind::Formulator, &[]), &ctx).unwrap();
    program(&mut state, &task(AgentKind::Programmer, &[]), &ctx).unwrap();
    evaluate(&mut state, &task(AgentKind::Evaluator, &[]), &ctx).unwrap();
    let c1 = state.problem.clause("c1").unwrap();
    assert_eq!(c1.status, ClauseStatus::CodeFlagged);
    assert!(c1.last_error.as_deref().unwrap().contains("Four"));
    assert!(state.problem.clauses().filter(|c| c.status == ClauseStatus::CodeFlagged).count() == 1);

    let Decision::Act { task: next } = rule_based(&state) else {
        panic!("expected a task")
    };
    assert_eq!(next.agent, AgentKind::Programmer);
    program(&mut state, &next, &ctx).unwrap();
    let c1 = state.problem.clause("c1").unwrap();
    assert_eq!(c1.status, ClauseStatus::Coded);
    assert_eq!(c1.code.as_deref(), Some("x <= 4;"));
    let debug_prompt = llm.prompts().into_iter().find(|p| p.template == "debug").unwrap();
    assert!(debug_prompt.messages[1].content.contains("x <= Four;"));
    assert!(debug_prompt.messages[1].content.contains("unknown symbol `Four`"));
}

#[test]
fn debugging_off_refuses_fixes() {
    let t = tiny_answers_with("x <= Four;");
    let llm = live_client(t);
    let backend = MockBackend::new([ExecutionResult::failure(
        Some("c1".into()),
        FailureKind::Semantic,
        "unknown symbol `Four`",
    )]);
    let prompts = PromptLibrary::builtin();
    let settings = RunSettings {
        debug: false,
        ..Default::default()
    };
    let record = Pipeline::new(&llm, &backend, &prompts, settings).run_agents(tiny());
    match &record.outcome {
        nl2milp::agents::Outcome::Failed { stage, .. } => {
            assert_eq!(*stage, nl2milp::agents::FailStage::Debug)
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(record.last_status, Some(ExecStatus::Error));
    assert!(llm.prompts().iter().all(|p| p.template != "debug"));
}

/// The factory fixture without its capacity clause is unbounded.
#[test]
fn unbounded_model_flags_no_code() {
    let record = replay_run("mini", "factory", RunSettings::default());
    let mut p = record.problem.clone().unwrap();
    p.remove_clause("c1").unwrap();
    for id in ["obj", "c2"] {
        p.transition_clause(id, ClauseStatus::CodeFlagged).unwrap();
        p.transition_clause(id, ClauseStatus::Coded).unwrap();
    }

    let job = nl2milp::execution::ExecutionJob::from_problem(
        &p,
        nl2milp::execution::CodeTarget::Amdl,
        Default::default(),
    )
    .unwrap();
    let flat = nl2milp::execution::compile_job(&job).unwrap();
    assert_eq!(oracle_solve(&flat).unwrap(), OracleOutcome::Unbounded);

    let llm = live_client(ScriptedTransport::new());
    let backend = backend();
    let prompts = PromptLibrary::builtin();
    let ctx = Pipeline::new(&llm, &backend, &prompts, RunSettings::default());
    let mut state = PipelineState::new(p, 10);
    let outcome = evaluate(&mut state, &task(AgentKind::Evaluator, &[]), &ctx).unwrap();
    assert!(outcome.starts_with("unbounded"), "{outcome}");
    let eval = state.last_eval.as_ref().unwrap();
    assert_eq!(eval.status, ExecStatus::Unbounded);
    assert_eq!(eval.candidates, ["c2"]);
    assert!(state
        .problem
        .clauses()
        .all(|c| c.status != ClauseStatus::CodeFlagged));
    assert!(state
        .problem
        .variables()
        .all(|v| v.status != VariableStatus::CodeFlagged));
    assert_eq!(llm.prompts().len(), 0);
}

#[test]
fn infeasible_model_lists_constraints() {
    let p = {
        let mut p = tiny();
        p.add_entity(Variable::new("x", vec![], Domain::Continuous, "amount")).unwrap();
        p.set_variable_code("x", "var x >= 5;".into()).unwrap();
        p.transition_variable("x", VariableStatus::Coded).unwrap();
        for (id, code) in [("obj", "maximize: x;"), ("c1", "x <= 4;")] {
            p.connect(id, "x").unwrap();
            p.set_formulation(id, "x".into()).unwrap();
            p.transition_clause(id, ClauseStatus::Formulated).unwrap();
            p.set_clause_code(id, code.into()).unwrap();
            p.transition_clause(id, ClauseStatus::Coded).unwrap();
        }
        p
    };
    assert_eq!(
        oracle_solve(&compile_program("var x >= 5;\nmaximize: x;\nx <= 4;", &DataBundle::default()).unwrap())
            .unwrap(),
        OracleOutcome::Infeasible
    );
    let llm = live_client(ScriptedTransport::new());
    let backend = backend();
    let prompts = PromptLibrary::builtin();
    let ctx = Pipeline::new(&llm, &backend, &prompts, RunSettings::default());
    let mut state = PipelineState::new(p, 10);
    evaluate(&mut state, &task(AgentKind::Evaluator, &[]), &ctx).unwrap();
    let eval = state.last_eval.as_ref().unwrap();
    assert_eq!(eval.status, ExecStatus::Infeasible);
    assert_eq!(eval.candidates, ["c1"]);
    let Decision::Act { task: next } = rule_based(&state) else {
        panic!("expected a review task")
    };
    assert_eq!(next.agent, AgentKind::Programmer);
    assert_eq!(next.targets, ["c1"]);
}

#[test]
fn scripted_tiny_run_solves_with_mock_backend() {
    let llm = live_client(tiny_answers());
    let mut values = IndexMap::new();
    values.insert("x".to_string(), 4.0);
    let backend = MockBackend::new([ExecutionResult::optimal(4.0, values)]);
    let prompts = PromptLibrary::builtin();
    let record = Pipeline::new(&llm, &backend, &prompts, RunSettings::default()).run_agents(tiny());
    assert_eq!(record.outcome.objective(), Some(4.0));
    let job = &backend.jobs()[0];
    let ids: Vec<&str> = job.entities.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids, ["x", "obj", "c1"]);
    assert_eq!(serde_json::to_value(job).unwrap()["protocol"], 1);
    for line in record.events_jsonl().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        for key in ["seq", "agent", "task", "entity_ids", "status_changes", "prompt_chars", "outcome"] {
            assert!(v.get(key).is_some(), "missing {key} in {line}");
        }
    }
}

fn coded_state(statuses: &[ClauseStatus], flagged: usize) -> PipelineState {
    let mut p = StructuredProblem::new("bg");
    p.add_entity(Variable::new("x", vec![], Domain::Continuous, "x")).unwrap();
    p.set_variable_code("x", "var x;".into()).unwrap();
    p.transition_variable("x", VariableStatus::Coded).unwrap();
    p.add_entity(Clause::objective("o")).unwrap();
    for i in 0..statuses.len() {
        p.add_entity(Clause::constraint(format!("c{}", i + 1), "c")).unwrap();
    }
    let ids: Vec<String> = p.clauses().map(|c| c.id.clone()).collect();
    for (k, id) in ids.iter().enumerate() {
        p.connect(id, "x").unwrap();
        p.set_formulation(id, "x".into()).unwrap();
        p.transition_clause(id, ClauseStatus::Formulated).unwrap();
        p.set_clause_code(id, "x <= 1;".into()).unwrap();
        p.transition_clause(id, ClauseStatus::Coded).unwrap();
        let target = if k == flagged {
            ClauseStatus::CodeFlagged
        } else if k == 0 {
            ClauseStatus::Coded
        } else {
            statuses[k - 1]
        };
        match target {
            ClauseStatus::Validated | ClauseStatus::FormulationFlagged | ClauseStatus::CodeFlagged => {
                p.transition_clause(id, target).unwrap()
            }
            _ => {}
        }
    }
    let mut s = PipelineState::new(p, 10);
    s.last_eval = Some(Evaluation {
        status: ExecStatus::Error,
        objective: None,
        values: IndexMap::new(),
        blamed: Some(ids[flagged].clone()),
        message: Some("bad code".into()),
        candidates: vec![ids[flagged].clone()],
        revision: 0,
    });
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// After a code error the rule policy always sends the programmer.
    #[test]
    fn code_errors_route_to_programmer(
        statuses in prop::collection::vec(
            prop::sample::select(vec![
                ClauseStatus::Coded,
                ClauseStatus::Validated,
                ClauseStatus::FormulationFlagged,
            ]),
            1..6,
        ),
        pick in any::<prop::sample::Index>(),
    ) {
        let flagged = pick.index(statuses.len() + 1);
        let s = coded_state(&statuses, flagged);
        match rule_based(&s) {
            Decision::Act { task } => {
                prop_assert_eq!(task.agent, AgentKind::Programmer);
                prop_assert!(task.targets.contains(s.last_eval.as_ref().unwrap().blamed.as_ref().unwrap()));
            }
            Decision::Done { .. } => prop_assert!(false, "done after a code error"),
        }
    }
}

fn manager_answer() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(json!({"agent": "formulator", "task": "formulate", "targets": []})),
        Just(json!({"agent": "programmer", "task": "code", "targets": []})),
        Just(json!({"agent": "programmer", "task": "fix", "targets": ["c1"]})),
        Just(json!({"agent": "evaluator", "task": "run", "targets": []})),
        Just(json!({"agent": "formulator", "task": "redo", "targets": ["obj"]})),
        Just(json!({"agent": "done", "task": "stop", "targets": []})),
        Just(json!({"agent": "auditor", "task": "?", "targets": []})),
        Just(json!({"agent": "evaluator", "task": "run", "targets": ["nope"]})),
        Just(Value::String("no idea".into())),
    ]
}

fn exec_result() -> impl Strategy<Value = ExecutionResult> {
    prop_oneof![
        Just(ExecutionResult::optimal(4.0, IndexMap::new())),
        Just(ExecutionResult::status_only(ExecStatus::Infeasible)),
        Just(ExecutionResult::status_only(ExecStatus::Unbounded)),
        Just(ExecutionResult::failure(Some("c1".into()), FailureKind::Semantic, "bad")),
        Just(ExecutionResult::failure(Some("x".into()), FailureKind::Syntax, "bad")),
        Just(ExecutionResult::failure(None, FailureKind::SolverCrashed, "crash")),
    ]
}

fn code_answer() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(json!({"code": "x <= 4;"})),
        Just(json!({"code": "x <= 3;"})),
        Just(json!({"code": "x <= ;"})),
        Just(json!({"verdict": "correct", "code": "x <= 4;"})),
        Just(json!({"verdict": "fixed", "code": "x <= 2;"})),
        Just(Value::String("```json\nnot json\n```".into())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Whatever the LLM and the backend do, a run stays within budget and
    /// its event log rebuilds the final problem.
    #[test]
    fn runs_terminate_within_budget(
        budget in 1u32..12,
        policy in prop::sample::select(vec![Policy::Llm, Policy::Rule]),
        debug in any::<bool>(),
        decisions in prop::collection::vec(manager_answer(), 1..12),
        results in prop::collection::vec(exec_result(), 0..12),
        fixes in prop::collection::vec(code_answer(), 1..6),
        reviews in prop::collection::vec(code_answer(), 1..6),
    ) {
        let t = tiny_answers()
            .answer("manager/decision", decisions)
            .answer("debug/c1", fixes.clone())
            .answer("debug/x", [json!({"code": "var x >= 0;"})])
            .answer("debug/obj", [json!({"code": "maximize: x;"})])
            .answer("review/c1", reviews.clone())
            .answer("review/obj", reviews)
            .answer("reformulate/c1", [json!({"formulation": "x \\le 4", "related": ["x"]})])
            .answer("reformulate/obj", [json!({"formulation": "\\max x", "related": ["x"]})]);
        let llm = live_client(t);
        let backend = MockBackend::new(results);
        let prompts = PromptLibrary::builtin();
        let settings = RunSettings { budget, policy, debug, ..Default::default() };
        let record = Pipeline::new(&llm, &backend, &prompts, settings).run_agents(tiny());
        prop_assert!(record.total_calls <= budget);
        prop_assert_eq!(record.calls_used.values().sum::<u32>(), record.total_calls);
        prop_assert_eq!(record.reconstruct().unwrap(), record.problem.clone());
        let seqs: Vec<u32> = record.events.iter().map(|e| e.seq).collect();
        prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));
        if let Some(objective) = record.outcome.objective() {
            prop_assert_eq!(objective, 4.0);
        }
    }
}
