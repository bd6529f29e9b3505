use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use nl2milp::agents::{FailStage, Outcome, Pipeline, Policy, RunSettings};
use nl2milp::amdl::{compile_program, oracle_solve, parse_lp, FlatModel, OracleOutcome};
use nl2milp::benchmark::{load_dataset, run_benchmark, BenchConfig, Instance, Tolerance, TRANSCRIPTS_DIR};
use nl2milp::config::Config;
use nl2milp::execution::{AmdlBackend, Backend, CodeTarget, ScriptBackend, RUNNER_INSTALL_HINT};
use nl2milp::llm::{HttpTransport, LlmClient, LlmError, Mode, PromptLibrary, TranscriptStore};
use nl2milp::model::{to_dot, DataBundle};
use nl2milp::preprocess::{preprocess, PreprocessError, RawProblem};

#[derive(Parser)]
#[command(name = "nl2milp", version, about = "Turn optimization word problems into solved MILP models")]
struct Cli {
    /// TOML config file; NL2MILP_* variables and flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// LP solver command with `{lp}` and `{sol}` placeholders.
    #[arg(long, global = true)]
    solver_cmd: Option<String>,
    /// Script runner command for `--code-target script`.
    #[arg(long, global = true)]
    runner_cmd: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Run the full pipeline on one instance directory.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Write the full run record as JSON here.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Run every instance of a dataset and write a report.
    Benchmark {
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Worker threads (0 = one per CPU).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
        /// Zero all timings so replay reports are byte-stable.
        #[arg(long)]
        no_timing: bool,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Preprocess one instance and emit problem.json and graph.dot.
    Inspect {
        instance: PathBuf,
        /// Output directory; without it problem.json goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Solve an LP file or AMDL program with the enumeration oracle.
    Oracle {
        file: PathBuf,
        /// data.json for an AMDL program.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunFlags {
    #[arg(long, default_value = "replay")]
    mode: Mode,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    no_debug: bool,
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    code_target: Option<CodeTarget>,
    /// Run the optional structure-detection pass.
    #[arg(long)]
    techniques: bool,
    /// Keep per-job solver files and print where they are.
    #[arg(long)]
    keep_artifacts: bool,
    /// Transcript directory; defaults to the dataset's `transcripts`.
    #[arg(long)]
    transcripts: Option<PathBuf>,
}

enum Failure {
    Config(String),
    ReplayMiss(String),
    Solve(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Solve(_) => 3,
            Failure::ReplayMiss(_) => 4,
        }
    }
}

struct Env {
    config: Config,
    run: RunFlags,
    settings: RunSettings,
}

impl Env {
    fn new(mut config: Config, cli: &Cli, run: RunFlags) -> Self {
        if cli.solver_cmd.is_some() {
            config.solver_cmd = cli.solver_cmd.clone();
        }
        if cli.runner_cmd.is_some() {
            config.runner_cmd = cli.runner_cmd.clone();
        }
        let mut settings = config.run;
        if let Some(b) = run.budget {
            settings.budget = b;
        }
        if let Some(p) = run.policy {
            settings.policy = p;
        }
        if let Some(t) = run.code_target {
            settings.code_target = t;
        }
        settings.debug &= !run.no_debug;
        settings.techniques |= run.techniques;
        Env { config, run, settings }
    }

    fn client(&self, transcripts: &Path) -> Result<LlmClient, Failure> {
        let model = self.config.llm.model.clone();
        let mode = self.run.mode;
        let transport = || -> Result<HttpTransport, Failure> {
            let http = self.config.http().ok_or_else(|| {
                Failure::Config(format!("{mode} mode needs llm.base_url or NL2MILP_BASE_URL"))
            })?;
            HttpTransport::new(http).map_err(|e| Failure::Config(e.to_string()))
        };
        let client = match mode {
            Mode::Replay => {
                let store = TranscriptStore::open_existing(transcripts).map_err(|e| {
                    Failure::Config(format!("replay needs transcripts at {}: {e}", transcripts.display()))
                })?;
                LlmClient::replay(model, store)
            }
            Mode::Record => {
                let store = TranscriptStore::open(transcripts).map_err(|e| Failure::Config(e.to_string()))?;
                LlmClient::new(Mode::Record, model).with_transport(transport()?).with_store(store)
            }
            Mode::Live => LlmClient::new(Mode::Live, model).with_transport(transport()?),
        };
        let client = client.with_temperature(self.config.llm.temperature);
        Ok(match self.config.llm.max_tokens {
            Some(n) => client.with_max_tokens(n),
            None => client,
        })
    }

    fn backend(&self) -> Result<Runner, Failure> {
        match self.settings.code_target {
            CodeTarget::Amdl => {
                let cmd = self.config.solver_cmd.clone().ok_or_else(|| {
                    Failure::Config("no LP solver configured (--solver-cmd or NL2MILP_SOLVER_CMD)".into())
                })?;
                Ok(Runner::Amdl(AmdlBackend::new(Some(cmd)).keep_artifacts(self.run.keep_artifacts)))
            }
            CodeTarget::Script => {
                let cmd = self
                    .config
                    .runner_cmd
                    .clone()
                    .ok_or_else(|| Failure::Config(format!("no runner configured; {RUNNER_INSTALL_HINT}")))?;
                Ok(Runner::Script(ScriptBackend::new(cmd)))
            }
        }
    }

    fn prompts(&self) -> Result<PromptLibrary, Failure> {
        match &self.config.prompts_dir {
            None => Ok(PromptLibrary::builtin()),
            Some(dir) => PromptLibrary::from_dir(dir).map_err(|e| Failure::Config(e.to_string())),
        }
    }
}

/// `<dataset>/instances/<id>` keeps its transcripts in `<dataset>/transcripts`.
fn instance_transcripts(instance: &Path) -> PathBuf {
    instance
        .parent()
        .and_then(Path::parent)
        .map_or_else(|| PathBuf::from(TRANSCRIPTS_DIR), |d| d.join(TRANSCRIPTS_DIR))
}

enum Runner {
    Amdl(AmdlBackend),
    Script(ScriptBackend),
}

impl Runner {
    fn as_dyn(&self) -> &dyn Backend {
        match self {
            Runner::Amdl(b) => b,
            Runner::Script(b) => b,
        }
    }

    fn print_kept(&self) {
        if let Runner::Amdl(b) = self {
            for dir in b.kept_artifacts() {
                eprintln!("kept {}", dir.display());
            }
        }
    }
}

fn solve(env: &Env, instance: &Path, record_out: Option<&Path>) -> Result<(), Failure> {
    let raw = RawProblem::from_dir(instance).map_err(|e| Failure::Config(e.to_string()))?;
    let transcripts = env.run.transcripts.clone().unwrap_or_else(|| instance_transcripts(instance));
    let llm = env.client(&transcripts)?;
    let backend = env.backend()?;
    let prompts = env.prompts()?;
    let record = Pipeline::new(&llm, backend.as_dyn(), &prompts, env.settings).run(&raw);
    backend.print_kept();
    if let Some(path) = record_out {
        let json = serde_json::to_string_pretty(&record).context("serializing run record")?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    for e in &record.events {
        eprintln!("  {}", e.summary());
    }
    let calls: serde_json::Map<String, serde_json::Value> =
        record.calls_used.iter().map(|(a, n)| (a.to_string(), (*n).into())).collect();
    let summary = serde_json::json!({
        "outcome": record.outcome.label(),
        "objective": record.outcome.objective(),
        "values": match &record.outcome { Outcome::Solved { values, .. } => Some(values), _ => None },
        "calls": calls,
        "total_calls": record.total_calls,
    });
    println!("{}", serde_json::to_string_pretty(&summary).context("serializing summary")?);
    match record.outcome {
        Outcome::Solved { .. } => Ok(()),
        Outcome::Failed { stage: FailStage::ReplayMiss, message } => Err(Failure::ReplayMiss(message)),
        Outcome::Failed { message, .. } => Err(Failure::Solve(message)),
        Outcome::BudgetExhausted => Err(Failure::Solve(format!(
            "budget of {} calls exhausted",
            record.budget
        ))),
    }
}

fn benchmark(
    env: &Env,
    dataset: &Path,
    report_path: &Path,
    parallel: usize,
    no_timing: bool,
) -> Result<(), Failure> {
    let instances = load_dataset(dataset).map_err(|e| Failure::Config(e.to_string()))?;
    if instances.is_empty() {
        return Err(Failure::Config(format!("no instances under {}", dataset.display())));
    }
    let transcripts = env.run.transcripts.clone().unwrap_or_else(|| dataset.join(TRANSCRIPTS_DIR));
    // fail fast on a bad mode/store before spinning up workers
    env.client(&transcripts)?;
    let backend = env.backend()?;
    let prompts = env.prompts()?;
    let config = BenchConfig {
        settings: env.settings,
        tolerance: Tolerance::default(),
        parallel,
    };
    let clients = |_: &Instance| env.client(&transcripts).map_err(|e| match e {
        Failure::Config(m) | Failure::ReplayMiss(m) | Failure::Solve(m) => m,
        Failure::Other(e) => e.to_string(),
    });
    let (report, _) = run_benchmark(&instances, &config, &clients, backend.as_dyn(), &prompts);
    backend.print_kept();
    let report = if no_timing { report.without_timing() } else { report };
    std::fs::write(report_path, report.to_json())
        .with_context(|| format!("writing {}", report_path.display()))?;
    print!("{}", report.render_table());
    let misses: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.stage == Some(FailStage::ReplayMiss))
        .map(|r| r.id.as_str())
        .collect();
    if misses.is_empty() {
        Ok(())
    } else {
        Err(Failure::ReplayMiss(format!("no transcript for {}", misses.join(", "))))
    }
}

fn inspect(env: &Env, instance: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let raw = RawProblem::from_dir(instance).map_err(|e| Failure::Config(e.to_string()))?;
    let transcripts = env.run.transcripts.clone().unwrap_or_else(|| instance_transcripts(instance));
    let llm = env.client(&transcripts)?;
    let prompts = env.prompts()?;
    let (problem, report) = preprocess(&raw, &llm, &prompts, env.settings.preprocess).map_err(|e| match e {
        PreprocessError::Llm(LlmError::ReplayMiss { .. }) => Failure::ReplayMiss(e.to_string()),
        e => Failure::Solve(e.to_string()),
    })?;
    for r in &report.removed {
        eprintln!("removed {} ({:?})", r.id, r.reason);
    }
    match out {
        None => print!("{}", problem.to_json()),
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            std::fs::write(dir.join("problem.json"), problem.to_json()).context("writing problem.json")?;
            std::fs::write(dir.join("graph.dot"), to_dot(&problem)).context("writing graph.dot")?;
            println!("{}", dir.join("problem.json").display());
            println!("{}", dir.join("graph.dot").display());
        }
    }
    Ok(())
}

fn load_model(file: &Path, data: Option<&Path>) -> Result<FlatModel, Failure> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", file.display())))?;
    if file.extension().is_some_and(|e| e == "lp") {
        return parse_lp(&text).map_err(|e| Failure::Config(format!("{}: {e}", file.display())));
    }
    let bundle = match data {
        None => DataBundle::default(),
        Some(p) => {
            let t = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            DataBundle::from_json(&t).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
    };
    compile_program(&text, &bundle).map_err(|e| Failure::Config(format!("{}: {e}", file.display())))
}

fn oracle(file: &Path, data: Option<&Path>) -> Result<(), Failure> {
    let model = load_model(file, data)?;
    let outcome = oracle_solve(&model).map_err(|e| Failure::Solve(e.to_string()))?;
    let json = match &outcome {
        OracleOutcome::Optimal { objective, values } => {
            let named: serde_json::Map<String, serde_json::Value> = model
                .vars
                .iter()
                .zip(values)
                .map(|(v, x)| (v.name.clone(), (*x).into()))
                .collect();
            serde_json::json!({ "status": "optimal", "objective": objective, "values": named })
        }
        other => serde_json::to_value(other).context("serializing outcome")?,
    };
    println!("{}", serde_json::to_string_pretty(&json).context("serializing outcome")?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let load = || Config::load(cli.config.as_deref()).map_err(|e| Failure::Config(e.to_string()));
    match cli.command.clone() {
        Command::Solve { instance, run, record } => {
            let env = Env::new(load()?, &cli, run);
            solve(&env, &instance, record.as_deref())
        }
        Command::Benchmark {
            dataset,
            report,
            parallel,
            no_timing,
            run,
        } => {
            let env = Env::new(load()?, &cli, run);
            benchmark(&env, &dataset, &report, parallel, no_timing)
        }
        Command::Inspect { instance, out, run } => {
            let env = Env::new(load()?, &cli, run);
            inspect(&env, &instance, out.as_deref())
        }
        Command::Oracle { file, data } => oracle(&file, data.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            match f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::ReplayMiss(m) => eprintln!("replay miss: {m}"),
                Failure::Solve(m) => eprintln!("not solved: {m}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(code)
        }
    }
}
