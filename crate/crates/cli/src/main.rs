//! `harmonic`: run scenario trials, talk to an agent as Daniel, code and
//! report transcripts, and inspect them.

use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use harmonic_core::agent::StrategicAgent;
use harmonic_core::coding::GroundTruth;
use harmonic_core::dialogue::ConsolePartner;
use harmonic_core::kb::{fixture_knowledge, KnowledgeBase};
use harmonic_core::llm::provider::Provider;
use harmonic_core::llm::synthetic::{SyntheticProvider, SYNTHETIC_MODELS};
use harmonic_core::llm::{Condition, LlmAgent};
use harmonic_core::ontoagent::OntoAgent;
use harmonic_core::report::{aggregate_report, code_dir};
use harmonic_core::runner::{header_for, run_trial, run_trials, transcript_name, Mode, RunError};
use harmonic_core::sim::ScenarioFixture;
use harmonic_core::transcript::{read_dir, Channel, Payload, TrialTranscript};

#[derive(Parser)]
#[command(
    name = "harmonic",
    version,
    about = "Strategic-agent trials in the ship engine-room scenario"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run batch trials and write one transcript per trial.
    Run(RunArgs),
    /// Play Daniel yourself: type lines, watch the agent act.
    Repl(ReplArgs),
    /// Code every transcript in a directory and print the report.
    Eval(EvalArgs),
    /// Print a transcript, optionally filtered.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AgentKind {
    Ontoagent,
    Llm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    /// A vendor API; needs the `live` feature and a credential variable.
    Live,
    /// Answers from recorded transcripts.
    Replay,
    /// Offline scripted models (`fixture-a`, `fixture-b`).
    Synthetic,
}

#[derive(Args, Debug)]
struct AgentArgs {
    #[arg(long, value_enum, default_value = "ontoagent")]
    agent: AgentKind,
    /// Model id (llm only).
    #[arg(long)]
    model: Option<String>,
    /// ik or ke (llm only).
    #[arg(long, value_parser = parse_condition)]
    condition: Option<Condition>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// openai or anthropic (live backend only).
    #[arg(long)]
    vendor: Option<String>,
    /// Strategic latency in ticks.
    #[arg(long)]
    latency: Option<u64>,
    /// World fixture file; defaults to the bundled scenario.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    agent: AgentArgs,
    /// Number of trials; replay defaults to every matching recording.
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tick budget per trial; defaults to the fixture's.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value = "transcripts")]
    out: PathBuf,
    /// Directory of recorded transcripts (replay only).
    #[arg(long)]
    recordings: Option<PathBuf>,
    /// Run trials one after another even in a parallel build.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct ReplArgs {
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    budget: Option<u64>,
    /// Where the session transcript is written.
    #[arg(long, default_value = "repl.jsonl")]
    out: PathBuf,
    /// Milliseconds each tick waits for typed input.
    #[arg(long, default_value_t = 500)]
    pace_ms: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    dir: PathBuf,
    /// Also write report.txt and report.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    file: PathBuf,
    /// Only these channels; repeat or separate with commas.
    #[arg(long, value_delimiter = ',', value_parser = parse_channel)]
    channel: Vec<Channel>,
    /// Only ticks in `a..b` (end exclusive).
    #[arg(long, value_parser = parse_ticks)]
    tick: Option<Range<u64>>,
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    Condition::parse(s).ok_or_else(|| format!("unknown condition `{s}`; expected ik or ke"))
}

fn parse_channel(s: &str) -> Result<Channel, String> {
    Channel::parse(s).ok_or_else(|| {
        format!("unknown channel `{s}`; expected dialogue, action, outcome, perception, tool, reasoning or exchange")
    })
}

fn parse_ticks(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("`{x}`: {e}"));
    let (a, b) = (num(a)?, num(b)?);
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok(a..b)
}

/// Exits with usage text.
fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ArgumentConflict, msg).exit()
}

/// Validated agent settings.
#[derive(Clone)]
enum AgentChoice {
    Onto {
        latency: u64,
    },
    Llm {
        model: String,
        condition: Condition,
        backend: Backend,
        vendor: Option<String>,
        latency: Option<u64>,
    },
}

impl AgentArgs {
    fn validate(&self) -> AgentChoice {
        match self.agent {
            AgentKind::Ontoagent => {
                for (set, flag) in [
                    (self.model.is_some(), "--model"),
                    (self.condition.is_some(), "--condition"),
                    (self.backend.is_some(), "--backend"),
                    (self.vendor.is_some(), "--vendor"),
                ] {
                    if set {
                        usage_error(format!("{flag} applies only to --agent llm"));
                    }
                }
                AgentChoice::Onto {
                    latency: self.latency.unwrap_or(0),
                }
            }
            AgentKind::Llm => {
                let Some(model) = self.model.clone() else {
                    usage_error("--agent llm requires --model");
                };
                let Some(backend) = self.backend else {
                    usage_error("--agent llm requires --backend (live, replay or synthetic)");
                };
                let Some(condition) = self.condition else {
                    usage_error("--agent llm requires --condition (ik or ke)");
                };
                if backend == Backend::Synthetic && !SYNTHETIC_MODELS.contains(&model.as_str()) {
                    usage_error(format!("synthetic models are {}", SYNTHETIC_MODELS.join(", ")));
                }
                if backend == Backend::Live && self.vendor.is_none() {
                    usage_error("--backend live requires --vendor (openai or anthropic)");
                }
                if backend != Backend::Live && self.vendor.is_some() {
                    usage_error("--vendor applies only to --backend live");
                }
                AgentChoice::Llm {
                    model,
                    condition,
                    backend,
                    vendor: self.vendor.clone(),
                    latency: self.latency,
                }
            }
        }
    }

    fn fixture(&self) -> Result<Arc<ScenarioFixture>> {
        load_fixture(self.fixture.as_deref())
    }
}

fn load_fixture(path: Option<&Path>) -> Result<Arc<ScenarioFixture>> {
    match path {
        None => Ok(ScenarioFixture::canonical()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let f = ScenarioFixture::parse(&text).with_context(|| format!("parsing {}", p.display()))?;
            Ok(Arc::new(f))
        }
    }
}

#[cfg(feature = "live")]
fn live_provider(model: &str, vendor: &str) -> Result<Box<dyn Provider>, RunError> {
    use harmonic_core::llm::provider::{LiveConfig, LiveProvider, Vendor};
    let v = Vendor::parse(vendor).ok_or_else(|| RunError::Config(format!("unknown vendor `{vendor}`")))?;
    Ok(Box::new(LiveProvider::new(LiveConfig::new(v, model, 0.0)?)?))
}

#[cfg(not(feature = "live"))]
fn live_provider(_model: &str, _vendor: &str) -> Result<Box<dyn Provider>, RunError> {
    Err(RunError::Config(
        "this build has no live backend; rebuild with `--features live`".into(),
    ))
}

/// Builds a non-replay agent for one trial.
fn make_agent(
    choice: &AgentChoice,
    kb: &Arc<KnowledgeBase>,
    fixture: &ScenarioFixture,
    seed: u64,
    trial: u32,
) -> Result<Box<dyn StrategicAgent + Send>, RunError> {
    match choice {
        AgentChoice::Onto { latency } => Ok(Box::new(OntoAgent::new(kb.clone(), fixture).with_latency(*latency))),
        AgentChoice::Llm {
            model,
            condition,
            backend,
            vendor,
            latency,
        } => {
            let provider: Box<dyn Provider> = match backend {
                Backend::Synthetic => Box::new(SyntheticProvider::new(model, *condition, seed, trial)?),
                Backend::Live => live_provider(model, vendor.as_deref().unwrap_or_default())?,
                Backend::Replay => return Err(RunError::Config("replay agents are built from recordings".into())),
            };
            let agent = LlmAgent::new(model, *condition, provider, kb.clone(), fixture);
            Ok(Box::new(match latency {
                Some(l) => agent.with_latency(*l),
                None => agent,
            }))
        }
    }
}

fn aborted(t: &TrialTranscript) -> Option<&str> {
    t.events.iter().find_map(|e| match &e.payload {
        Payload::Abort { reason } => Some(reason.as_str()),
        _ => None,
    })
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let choice = args.agent.validate();
    let replaying = matches!(
        choice,
        AgentChoice::Llm {
            backend: Backend::Replay,
            ..
        }
    );
    if replaying != args.recordings.is_some() {
        usage_error(if replaying {
            "--backend replay requires --recordings"
        } else {
            "--recordings applies only to --backend replay"
        });
    }
    if args.trials == Some(0) {
        usage_error("--trials must be at least 1");
    }
    let fixture = args.agent.fixture()?;
    let kb = Arc::new(fixture_knowledge());
    let mode = if args.sequential {
        Mode::Sequential
    } else {
        Mode::default_for_build()
    };

    let transcripts = if let (AgentChoice::Llm { model, condition, .. }, Some(dir)) = (&choice, &args.recordings) {
        let mut recs: Vec<TrialTranscript> = read_dir(dir)?
            .into_iter()
            .map(|(_, t)| t)
            .filter(|t| {
                t.header.model.as_deref() == Some(model) && t.header.condition.as_deref() == Some(condition.as_str())
            })
            .collect();
        if recs.is_empty() {
            bail!("{}: no recordings for {model} / {}", dir.display(), condition.as_str());
        }
        if let Some(n) = args.trials {
            if n as usize > recs.len() {
                bail!("{} trials requested but only {} recordings match", n, recs.len());
            }
            recs.truncate(n as usize);
        }
        let (seed, budget) = (recs[0].header.seed, recs[0].header.budget);
        if recs.iter().any(|r| r.header.seed != seed || r.header.budget != budget) {
            bail!("matching recordings differ in seed or budget; replay them from separate directories");
        }
        if args.seed.is_some_and(|s| s != seed) || args.budget.is_some_and(|b| b != budget) {
            usage_error(format!("recordings were made with --seed {seed} --budget {budget}"));
        }
        if args.agent.latency.is_some() {
            usage_error("replay takes its latency from the recordings");
        }
        let recs = Arc::new(recs);
        let make = {
            let (recs, kb, fixture) = (recs.clone(), kb.clone(), fixture.clone());
            move |i: u32| -> Result<Box<dyn StrategicAgent + Send>, RunError> {
                Ok(Box::new(LlmAgent::replaying(&recs[i as usize], kb.clone(), &fixture)?))
            }
        };
        run_trials(&make, &fixture, recs.len() as u32, seed, budget, mode, Some(&args.out))?
    } else {
        let seed = args.seed.unwrap_or(0);
        let budget = args.budget.unwrap_or(fixture.kinematics.budget);
        let make = {
            let (choice, kb, fixture) = (choice.clone(), kb.clone(), fixture.clone());
            move |i: u32| make_agent(&choice, &kb, &fixture, seed, i)
        };
        run_trials(
            &make,
            &fixture,
            args.trials.unwrap_or(5),
            seed,
            budget,
            mode,
            Some(&args.out),
        )?
    };

    let mut failures = 0;
    for (i, t) in transcripts.iter().enumerate() {
        let name = transcript_name(&t.header, i as u32);
        let (delivered, ticks) = t.trial_end().unwrap_or((false, 0));
        let commands = t.commands().count();
        match aborted(t) {
            Some(reason) => {
                failures += 1;
                println!("{name}: aborted at tick {ticks}: {reason}");
            }
            None => println!(
                "{name}: {} in {ticks} ticks, {commands} commands",
                if delivered { "delivered" } else { "not delivered" }
            ),
        }
    }
    println!("{} transcripts written to {}", transcripts.len(), args.out.display());
    Ok(if failures > 0 {
        eprintln!("{failures} trial(s) aborted");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_repl(args: ReplArgs) -> Result<ExitCode> {
    let choice = args.agent.validate();
    if matches!(
        choice,
        AgentChoice::Llm {
            backend: Backend::Replay,
            ..
        }
    ) {
        usage_error("the REPL cannot replay recordings; use `run --backend replay`");
    }
    let fixture = args.agent.fixture()?;
    let kb = Arc::new(fixture_knowledge());
    let mut agent = make_agent(&choice, &kb, &fixture, args.seed, 0)?;
    let budget = args.budget.unwrap_or(fixture.kinematics.budget);

    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut partner = ConsolePartner::new(rx).with_pace(Duration::from_millis(args.pace_ms));
    println!("You are Daniel. Type a line and press enter; end input (Ctrl-D) to leave.");
    let stdout = std::io::stdout();
    let transcript = run_trial(agent.as_mut(), &fixture, &mut partner, args.seed, budget, &mut |e| {
        if e.channel != Channel::Exchange {
            let mut out = stdout.lock();
            let _ = writeln!(out, "{}", e.render());
            let _ = out.flush();
        }
    });
    debug_assert_eq!(
        transcript.header,
        header_for(agent.as_ref(), &fixture, args.seed, budget)
    );
    std::fs::write(&args.out, transcript.to_jsonl()).with_context(|| format!("writing {}", args.out.display()))?;
    println!("session transcript written to {}", args.out.display());
    Ok(match aborted(&transcript) {
        Some(_) => ExitCode::FAILURE,
        None => ExitCode::SUCCESS,
    })
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let fixture = load_fixture(args.fixture.as_deref())?;
    let gt = GroundTruth::new(fixture, &fixture_knowledge());
    let coded = code_dir(&args.dir, &gt)?;
    let report = aggregate_report(&coded);
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("report.txt"), &text)?;
        std::fs::write(dir.join("report.json"), report.to_json())?;
        println!("report written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(args: InspectArgs) -> Result<ExitCode> {
    let t = TrialTranscript::read(&args.file)?;
    let h = &t.header;
    println!(
        "{} model={} condition={} seed={} latency={} budget={} fixture={}",
        h.agent,
        h.model.as_deref().unwrap_or("-"),
        h.condition.as_deref().unwrap_or("-"),
        h.seed,
        h.latency,
        h.budget,
        h.fixture_version
    );
    let shown: Vec<String> = t
        .events
        .iter()
        .filter(|e| args.channel.is_empty() || args.channel.contains(&e.channel))
        .filter(|e| args.tick.as_ref().is_none_or(|r| r.contains(&e.tick)))
        .map(|e| e.render())
        .collect();
    if shown.is_empty() {
        println!("no events match the filters");
    }
    for line in shown {
        println!("{line}");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Repl(a) => cmd_repl(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
