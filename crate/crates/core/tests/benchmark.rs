mod common;

use std::time::Instant;

use common::*;
use nl2milp::agents::{AgentKind, Outcome, Pipeline, Policy, RunRecord, RunSettings};
use nl2milp::benchmark::{
    load_dataset, run_benchmark, BenchConfig, FailureCategory, Instance, Report, Tolerance,
};
use nl2milp::llm::{LlmClient, PromptLibrary};
use nl2milp::model::{Dim, ParamValue, Parameter};
use nl2milp::preprocess::preprocess;

fn bench(group: &str, settings: RunSettings) -> (Report, Vec<Option<RunRecord>>) {
    let instances = load_dataset(&fixtures().join(group)).unwrap();
    let config = BenchConfig {
        settings,
        tolerance: Tolerance::default(),
        parallel: 0,
    };
    let clients = |_: &Instance| -> Result<LlmClient, String> { Ok(replay_client(group)) };
    run_benchmark(&instances, &config, &clients, &backend(), &PromptLibrary::builtin())
}

fn with_budget(budget: u32) -> RunSettings {
    RunSettings {
        budget,
        ..Default::default()
    }
}

#[test]
fn mini_replay_scores_five_of_six() {
    let started = Instant::now();
    let (report, records) = bench("mini", RunSettings::default());
    assert!(started.elapsed().as_secs() < 30, "{:?}", started.elapsed());
    assert_eq!((report.total, report.correct), (6, 5), "{}", report.render_table());
    report.verify().unwrap();

    let blend = report.rows.iter().find(|r| r.id == "blend").unwrap();
    assert_eq!(blend.outcome, "budget_exhausted");
    assert_eq!(blend.category, Some(FailureCategory::CodingErrors));

    for (row, record) in report.rows.iter().zip(&records) {
        let Some(obj) = row.objective else { continue };
        let oracle = oracle_objective(&final_program(record.as_ref().unwrap()));
        assert!(rel_close(obj, oracle, 1e-6), "{}: {obj} vs oracle {oracle}", row.id);
    }
}

#[test]
fn accuracy_does_not_drop_with_more_budget() {
    let acc: Vec<usize> = [3, 5, 10]
        .into_iter()
        .map(|b| bench("mini", with_budget(b)).0.correct)
        .collect();
    assert!(acc.windows(2).all(|w| w[0] <= w[1]), "{acc:?}");
    assert_eq!(acc, [4, 5, 5]);
}

#[test]
fn no_debug_turns_bakery_into_a_coding_failure() {
    let (report, _) = bench(
        "mini",
        RunSettings {
            debug: false,
            ..Default::default()
        },
    );
    let bakery = report.rows.iter().find(|r| r.id == "bakery").unwrap();
    assert_eq!(bakery.outcome, "failed");
    assert_eq!(bakery.category, Some(FailureCategory::CodingErrors));
    assert_eq!(report.correct, 4);
}

#[test]
fn adversarial_manager_stops_at_the_budget() {
    for budget in [3, 5, 10] {
        let settings = RunSettings {
            budget,
            policy: Policy::Llm,
            ..Default::default()
        };
        let record = replay_run("adversarial", "factory", settings);
        assert_eq!(record.outcome, Outcome::BudgetExhausted, "budget {budget}");
        assert_eq!(record.total_calls, budget);
        let spent: u32 = record.calls_used.values().sum();
        assert_eq!(spent, budget);
    }
}

#[test]
fn unconnected_parameters_leave_prompts_untouched() {
    let llm = replay_client("mini");
    let prompts = PromptLibrary::builtin();
    let settings = RunSettings::default();
    let (base, _) = preprocess(&raw("mini", "factory"), &llm, &prompts, settings.preprocess).unwrap();

    let mut grown = base.clone();
    grown.data.get_or_insert_with(Default::default).dimensions.insert("Z".into(), 3);
    for i in 0..40 {
        let symbol = format!("Unused{i}");
        let (dims, value) = if i % 2 == 0 {
            (vec![], ParamValue::Scalar(i as f64 + 0.5))
        } else {
            (
                vec![Dim::Named("Z".into())],
                ParamValue::Array(vec![ParamValue::Scalar(i as f64); 3]),
            )
        };
        grown.data.as_mut().unwrap().values.insert(symbol.clone(), value);
        grown
            .add_entity(Parameter::new(symbol.as_str(), dims, "a figure nothing depends on"))
            .unwrap();
    }
    assert_eq!(grown.parameters().count(), base.parameters().count() + 40);

    let backend = backend();
    let run = |p| {
        let llm = replay_client("mini");
        Pipeline::new(&llm, &backend, &prompts, settings).run_agents(p)
    };
    let a = run(base);
    let b = run(grown);
    assert!(a.outcome.objective().is_some(), "{:?}", a.outcome);
    assert_eq!(a.outcome, b.outcome);
    assert_eq!(a.prompts.len(), b.prompts.len());
    for (x, y) in a.prompts.iter().zip(&b.prompts) {
        assert_eq!(x.key, y.key, "{} {}", x.template, x.subject);
        assert_eq!(x.messages, y.messages);
    }
    let mean = |r: &RunRecord| r.prompts.iter().map(|p| p.chars).sum::<usize>() as f64 / r.prompts.len() as f64;
    assert!(mean(&b) < 1.05 * mean(&a));
}

#[test]
fn report_round_trips_and_drops_timing() {
    let (report, _) = bench("mini", with_budget(3));
    let back: Report = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
    let calm = report.without_timing();
    assert_eq!(calm.wall_ms, 0);
    assert!(calm.rows.iter().all(|r| r.wall_ms == 0));
    calm.verify().unwrap();
    assert!(report.mean_calls[&AgentKind::Formulator] >= 1.0);
    assert_eq!(report.failures.values().sum::<usize>(), report.incorrect + report.failed);
}
