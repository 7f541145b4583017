use clap::{Args, Parser, Subcommand, ValueEnum};
use eclair::author::{author_cassettes, shipped_config, shipped_dir};
use eclair::bench::{run_suite, Suite};
use eclair::config::{Config, JudgeChoice, DEFAULT_SEED};
use eclair::service;
use eclair_core::demonstrate::{extract_keyframes, generate_sop, score_sop, ContextOptions, DemoMode, SopJudge};
use eclair_core::execute::{
    load_whitelist, run_workflow, AutoDecision, Decision, DecisionKind, DecisionSource, Interrupt, RunDir,
    RunHooks, RunInputs, RunPolicy,
};
use eclair_core::fm::{BackendKind, Provider};
use eclair_core::ground::GroundStrategy;
use eclair_core::model::{parse_sop, read_bundle, write_bundle, Workflow};
use eclair_core::oracle::{fixture_evalset, Oracle, OracleMode};
use eclair_core::sim::{fixtures, record_demonstration, resolve_site, SimEnv};
use eclair_core::validate::{write_evalset, Subject};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "eclair", version, about = "Workflow agent: SOPs from demonstrations, execution, self-validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Work with demonstration bundles.
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Execute one workflow in a simulated site.
    Run(RunArgs),
    /// Run an evaluation suite and write report.json and report.md.
    Eval(EvalArgs),
    /// Write the fixture evaluation set to disk.
    Evalset {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        jitter_seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the run-controller HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Manage model cassettes.
    #[command(subcommand)]
    Cassette(CassetteCommand),
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Record a simulated demonstration of a fixture workflow as a bundle.
    Record {
        workflow: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jitter_seed: Option<u64>,
    },
    /// Print the keyframes selected from a bundle's recording.
    Keyframes {
        bundle: PathBuf,
        #[arg(long, default_value_t = eclair_core::demonstrate::DEFAULT_SETTLE_MS)]
        settle_ms: u64,
    },
    /// Generate an SOP from a bundle.
    Sop {
        bundle: PathBuf,
        #[arg(long, default_value = "wd+kf+act")]
        mode: DemoMode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score a candidate SOP against a reference.
    Score {
        candidate: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value = "det")]
        judge: JudgeChoice,
        /// Workflow description shown to a model judge.
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Subcommand)]
enum CassetteCommand {
    /// Re-record the shipped oracle cassettes.
    Author {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Live,
    Record,
    Replay,
    /// The scripted fixture oracle, in process.
    Oracle,
    /// The fixture oracle that never performs a workflow's final step.
    OracleOmitFinal,
}

#[derive(Args, Clone)]
struct BackendArgs {
    /// Overrides the config's backend.
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
    /// Overrides the config's cassette path.
    #[arg(long)]
    cassette: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecideMode {
    /// Ask on the terminal.
    Prompt,
    Approve,
    Deny,
}

#[derive(Args)]
struct RunArgs {
    /// Workflow metadata: `{"id", "description", "env"}`.
    #[arg(long)]
    workflow: PathBuf,
    #[arg(long)]
    sop: Option<PathBuf>,
    /// Site fixture name or path to a site.yaml.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "som")]
    strategy: GroundStrategy,
    #[arg(long)]
    max_actions: Option<usize>,
    /// JSON array of actions that need approval.
    #[arg(long)]
    whitelist: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "prompt")]
    decide: DecideMode,
}

#[derive(Args)]
struct EvalArgs {
    suite: Suite,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// validate: score only this task.
    #[arg(long)]
    task: Option<Subject>,
    /// validate: labeled set (evalset.jsonl or its directory).
    #[arg(long)]
    set: Option<PathBuf>,
    /// validate, demonstrate: judge kind.
    #[arg(long)]
    judge: Option<JudgeChoice>,
    /// grounding: case directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// grounding, execute: grounding strategy.
    #[arg(long)]
    strategy: Option<GroundStrategy>,
}

type Failure = Box<dyn std::error::Error>;

fn load_config(path: Option<&Path>, overrides: &BackendArgs) -> Result<(Config, Option<Arc<dyn Provider>>), Failure> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => {
            let default = shipped_config("replay.toml");
            if !default.exists() {
                return Err("no --config given and no shipped replay config found".into());
            }
            Config::load(&default)?
        }
    };
    let mut provider: Option<Arc<dyn Provider>> = None;
    if let Some(b) = overrides.backend {
        config.fm.backend = match b {
            BackendChoice::Live => BackendKind::Live,
            BackendChoice::Record => BackendKind::Record,
            BackendChoice::Replay => BackendKind::Replay,
            BackendChoice::Oracle | BackendChoice::OracleOmitFinal => {
                let mode = if matches!(b, BackendChoice::Oracle) {
                    OracleMode::Faithful
                } else {
                    OracleMode::OmitFinal
                };
                provider = Some(Arc::new(Oracle::fixtures(mode).provider()));
                BackendKind::Live
            }
        };
    }
    if let Some(c) = &overrides.cassette {
        config.fm.cassette_path = Some(c.clone());
    }
    Ok((config, provider))
}

/// Reads approve/deny answers from the terminal.
struct PromptDecisions;

impl DecisionSource for PromptDecisions {
    fn decide(&mut self, interrupt: &Interrupt, _timeout: Option<Duration>) -> Option<Decision> {
        let stdin = std::io::stdin();
        loop {
            eprint!(
                "[{}] {:?}: {}\napprove or deny? ",
                interrupt.interrupt_id, interrupt.reason, interrupt.action
            );
            std::io::stderr().flush().ok();
            let mut line = String::new();
            if stdin.lock().read_line(&mut line).ok()? == 0 {
                return None;
            }
            let decision = match line.trim().to_ascii_lowercase().as_str() {
                "a" | "approve" | "y" | "yes" => DecisionKind::Approve,
                "d" | "deny" | "n" | "no" => DecisionKind::Deny,
                _ => continue,
            };
            return Some(Decision {
                interrupt_id: interrupt.interrupt_id.clone(),
                decision,
                note: Some("terminal".into()),
            });
        }
    }
}

fn demo(cmd: DemoCommand) -> Result<(), Failure> {
    match cmd {
        DemoCommand::Record { workflow, out, jitter_seed } => {
            let spec = fixtures::site_of(&workflow).ok_or_else(|| format!("unknown fixture workflow {workflow:?}"))?;
            let bundle = record_demonstration(&spec, &workflow, jitter_seed)?;
            write_bundle(&bundle, &out)?;
            eprintln!("wrote {} frames and {} actions to {}", bundle.frames.len(), bundle.action_log.len(), out.display());
        }
        DemoCommand::Keyframes { bundle, settle_ms } => {
            let b = read_bundle(&bundle)?;
            let k = extract_keyframes(&b.frames, &b.action_log, settle_ms)?;
            println!("{}", serde_json::to_string_pretty(&k)?);
        }
        DemoCommand::Sop { bundle, mode, config, backend } => {
            let (config, provider) = load_config(config.as_deref(), &backend)?;
            let b = read_bundle(&bundle)?;
            let mut options = ContextOptions::default();
            if let Ok(spec) = resolve_site(&b.workflow.environment_ref) {
                options = options.with_site_labels(&spec);
            }
            let sop = generate_sop(&b, mode, &options, config.fm.build(provider)?.as_ref())?;
            print!("{}", sop.to_markdown());
        }
        DemoCommand::Score { candidate, reference, judge, description, config, backend } => {
            let candidate = parse_sop(&std::fs::read_to_string(&candidate)?)?;
            let reference = parse_sop(&std::fs::read_to_string(&reference)?)?;
            let score = match judge {
                JudgeChoice::Det => score_sop(&candidate, &reference, &SopJudge::Deterministic)?,
                JudgeChoice::Fm => {
                    let (config, provider) = load_config(config.as_deref(), &backend)?;
                    let b = config.fm.build(provider)?;
                    score_sop(&candidate, &reference, &SopJudge::Fm { backend: b.as_ref(), description: &description })?
                }
            };
            println!("{}", serde_json::to_string_pretty(&score)?);
        }
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<ExitCode, Failure> {
    let (config, provider) = load_config(args.config.as_deref(), &args.backend)?;
    let workflow: Workflow = serde_json::from_str(&std::fs::read_to_string(&args.workflow)?)?;
    let site = args.env.clone().unwrap_or_else(|| workflow.environment_ref.clone());
    let spec = resolve_site(&site)?;
    let sop = match &args.sop {
        Some(p) => Some(parse_sop(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let constraints = match (&sop, fixtures::constraints(&workflow.id)) {
        (Some(_), Some(c)) if fixtures::site(&site).is_some() => c,
        _ => Vec::new(),
    };
    let policy = RunPolicy {
        max_actions: args.max_actions,
        strategy: args.strategy,
        whitelist: match &args.whitelist {
            Some(p) => load_whitelist(p)?,
            None => Vec::new(),
        },
        ..RunPolicy::default()
    };
    let backend = config.fm.build(provider)?;
    let run_id = args
        .out
        .file_name()
        .map_or_else(|| workflow.id.clone(), |n| n.to_string_lossy().into_owned());
    let mut dir = RunDir::create(&args.out, &workflow.id)?;
    let mut decisions: Box<dyn DecisionSource> = match args.decide {
        DecideMode::Prompt => Box::new(PromptDecisions),
        DecideMode::Approve => Box::new(AutoDecision(DecisionKind::Approve)),
        DecideMode::Deny => Box::new(AutoDecision(DecisionKind::Deny)),
    };
    let mut events = eclair_core::execute::NullSink;
    let mut env = SimEnv::new(spec);
    let result = run_workflow(
        &RunInputs {
            run_id: &run_id,
            workflow: &workflow,
            sop: sop.as_ref(),
            constraints: &constraints,
        },
        &mut env,
        backend.as_ref(),
        &policy,
        &mut RunHooks {
            events: &mut events,
            decisions: decisions.as_mut(),
            dir: Some(&mut dir),
        },
    );
    println!("{}", serde_json::to_string_pretty(&result.summary())?);
    Ok(if result.succeeded() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let (mut config, provider) = load_config(args.config.as_deref(), &args.backend)?;
    if let Some(t) = args.task {
        config.validate.tasks = vec![t];
    }
    if let Some(s) = args.set {
        config.validate.set = Some(s);
    }
    if let Some(j) = args.judge {
        config.validate.judge = j;
        config.demonstrate.judge = j;
    }
    if let Some(d) = args.dataset {
        config.grounding.dataset = Some(d);
    }
    if let Some(s) = args.strategy {
        config.grounding.strategies = vec![s];
        config.execute.strategy = s;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("reports").join(args.suite.as_str()));
    let report = run_suite(args.suite, &config, args.seed, &out, provider)?;
    print!("{}", report.markdown);
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome: Result<ExitCode, Failure> = match cli.command {
        Command::Demo(cmd) => demo(cmd).map(|_| ExitCode::SUCCESS),
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args).map(|_| ExitCode::SUCCESS),
        Command::Evalset { seed, jitter_seeds, out } => (|| {
            let (items, screens) = fixture_evalset(seed, &jitter_seeds)?;
            write_evalset(&out, &items)?;
            screens.write_all(&out)?;
            eprintln!("wrote {} items to {}", items.len(), out.display());
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Serve { port, config, backend } => (|| {
            let (config, provider) = load_config(config.as_deref(), &backend)?;
            service::serve(&config, provider, port)?;
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Cassette(CassetteCommand::Author { out }) => (|| {
            let dir = out.unwrap_or_else(|| shipped_dir().join("cassettes"));
            for p in author_cassettes(&dir)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        })(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
