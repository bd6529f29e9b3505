//! Record transcripts for a fixture dataset from scripted answers.
//!
//! ```text
//! cargo run -p nl2milp-core --example author_transcripts -- \
//!     --dataset fixtures/mini [--answers DIR] [--out DIR] [--budget N] \
//!     [--policy rule|llm] [--techniques] [--no-debug] [--fresh] [ID...]
//! ```
//!
//! Answers default to `<dataset>/answers/<id>.json`, transcripts go to
//! `<dataset>/transcripts`. Existing entries are served as-is, so `--fresh`
//! clears the output directory first.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use nl2milp::agents::{run_pipeline, Policy, RunSettings};
use nl2milp::benchmark::{load_dataset, INSTANCES_DIR, TRANSCRIPTS_DIR};
use nl2milp::config::DEFAULT_MODEL;
use nl2milp::execution::AmdlBackend;
use nl2milp::llm::{LlmClient, Mode, PromptLibrary, ScriptedTransport, TranscriptStore};
use nl2milp::preprocess::RawProblem;

struct Args {
    dataset: PathBuf,
    answers: Option<PathBuf>,
    out: Option<PathBuf>,
    settings: RunSettings,
    fresh: bool,
    ids: Vec<String>,
}

fn parse_args() -> Result<Args, String> {
    let mut args = Args {
        dataset: PathBuf::new(),
        answers: None,
        out: None,
        settings: RunSettings::default(),
        fresh: false,
        ids: Vec::new(),
    };
    let mut it = std::env::args().skip(1);
    while let Some(a) = it.next() {
        let mut value = || it.next().ok_or_else(|| format!("{a} needs a value"));
        match a.as_str() {
            "--dataset" => args.dataset = value()?.into(),
            "--answers" => args.answers = Some(value()?.into()),
            "--out" => args.out = Some(value()?.into()),
            "--budget" => args.settings.budget = value()?.parse().map_err(|e| format!("--budget: {e}"))?,
            "--policy" => args.settings.policy = value()?.parse::<Policy>()?,
            "--techniques" => args.settings.techniques = true,
            "--no-debug" => args.settings.debug = false,
            "--fresh" => args.fresh = true,
            flag if flag.starts_with("--") => return Err(format!("unknown flag {flag}")),
            id => args.ids.push(id.to_string()),
        }
    }
    if args.dataset.as_os_str().is_empty() {
        return Err("--dataset is required".into());
    }
    Ok(args)
}

fn clear_json(dir: &Path) -> std::io::Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            std::fs::remove_file(path)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match parse_args() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let answers = args.answers.clone().unwrap_or(args.dataset.join("answers"));
    let out = args.out.clone().unwrap_or(args.dataset.join(TRANSCRIPTS_DIR));
    if args.fresh {
        if let Err(e) = clear_json(&out) {
            eprintln!("error: clearing {}: {e}", out.display());
            return ExitCode::FAILURE;
        }
    }
    let store = match TranscriptStore::open(&out) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };

    // instance dirs without a truth file (fixtures/extra) are fine here
    let dirs: Vec<(String, PathBuf)> = match load_dataset(&args.dataset) {
        Ok(instances) if !instances.is_empty() => {
            instances.into_iter().map(|i| (i.id, i.dir)).collect()
        }
        _ => {
            let mut v: Vec<(String, PathBuf)> = std::fs::read_dir(args.dataset.join(INSTANCES_DIR))
                .map(|rd| {
                    rd.filter_map(Result::ok)
                        .filter(|e| e.path().is_dir())
                        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
                        .collect()
                })
                .unwrap_or_default();
            v.sort();
            v
        }
    };

    let solver = format!(
        "python3 {}/../../tools/scipy_lp_solver.py {{lp}} {{sol}}",
        env!("CARGO_MANIFEST_DIR")
    );
    let backend = AmdlBackend::new(Some(solver));
    let prompts = PromptLibrary::builtin();
    let mut failed = false;

    for (id, dir) in &dirs {
        if !args.ids.is_empty() && !args.ids.contains(id) {
            continue;
        }
        let script = match std::fs::read_to_string(answers.join(format!("{id}.json")))
            .map_err(|e| e.to_string())
            .and_then(|t| ScriptedTransport::from_json(&t))
        {
            Ok(s) => Arc::new(s),
            Err(e) => {
                eprintln!("{id}: no usable answers: {e}");
                failed = true;
                continue;
            }
        };
        let raw = match RawProblem::from_dir(dir) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{id}: {e}");
                failed = true;
                continue;
            }
        };
        let llm = LlmClient::new(Mode::Record, DEFAULT_MODEL)
            .with_transport(script.clone())
            .with_store(store.clone());
        let record = run_pipeline(&raw, &llm, &backend, &prompts, args.settings);
        println!(
            "== {id}: {} ({} calls, {} prompts)",
            match record.outcome.objective() {
                Some(v) => format!("solved, objective {v}"),
                None => serde_json::to_string(&record.outcome).unwrap_or_default(),
            },
            record.total_calls,
            record.prompts.len()
        );
        for e in &record.events {
            println!("   {}", e.summary());
        }
        for key in script.unused() {
            println!("   warning: answer {key} was never asked for");
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
