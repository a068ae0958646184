use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use hilo_core::datagen::{build_dataset, bundled_demos, read_jsonl, write_jsonl};
use hilo_core::domain::{Episode, ScenarioType, TaskKind, UserEvent};
use hilo_core::eval::{bundled_suite, export_suites, run_benchmark, run_trial, Suite, TrialOptions};
use hilo_core::highlevel::PolicyKind;
use hilo_core::orchestrator::{detect_gaps, interjection_at, prompt_at, run_session, SessionConfig};
use hilo_gateway::{parse_policy, replay, serve, ServerConfig};

#[derive(Parser)]
#[command(name = "hilo", version, about = "Hierarchical instruction-following runtime")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve live sessions over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "logs")]
        log_dir: PathBuf,
        /// Virtual seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Run one headless session and write its log.
    Run {
        #[arg(long)]
        task: Option<String>,
        #[arg(long, default_value = "hierarchical_reference")]
        policy: String,
        /// Suite file or bundled suite name; runs one scripted trial.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        prompt: Option<String>,
        /// Interjection as TIME:TEXT; repeatable.
        #[arg(long)]
        interject: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print the frames a logged session produced.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Score policies on suites.
    Bench {
        /// Suite files or bundled names, comma separated.
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "hierarchical_reference,flat_passthrough,reference_no_constraints")]
        policies: Vec<String>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic interactions from demo episodes.
    Datagen {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        per_segment: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "negative_task,situated_correction,specific_constraint,direct_request")]
        scenarios: Vec<String>,
    },
    /// Write scripted demo episodes as JSON Lines.
    Demos {
        #[arg(long, value_delimiter = ',', default_value = "sandwich_making,grocery_shopping")]
        tasks: Vec<String>,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled suites as JSON files.
    ExportSuites {
        #[arg(long, default_value = "suites")]
        dir: PathBuf,
    },
}

fn policy(s: &str) -> Result<PolicyKind> {
    parse_policy(s).map_err(|e| anyhow!(e))
}

fn load_suite(s: &str) -> Result<Suite> {
    if let Some(b) = bundled_suite(s) {
        return Ok(b);
    }
    Suite::load(Path::new(s)).map_err(|e| anyhow!("suite {s}: {e}"))
}

fn parse_interjection(s: &str) -> Result<UserEvent> {
    let (t, text) = s.split_once(':').ok_or_else(|| anyhow!("expected TIME:TEXT, got '{s}'"))?;
    let t: f64 = t.trim().parse().with_context(|| format!("bad time in '{s}'"))?;
    Ok(interjection_at(text.trim(), t))
}

fn run(
    task: Option<String>,
    policy_name: &str,
    suite: Option<String>,
    trial: usize,
    prompt: Option<String>,
    interject: &[String],
    seed: u64,
    log_path: Option<PathBuf>,
) -> Result<()> {
    let pol = policy(policy_name)?;
    let log = if let Some(s) = suite {
        let suite = load_suite(&s)?;
        let t = suite.trials.get(trial).ok_or_else(|| anyhow!("suite {} has {} trials", suite.name, suite.trials.len()))?;
        let (result, log) = run_trial(&suite.name, pol, t, seed.wrapping_add(t.seed), &TrialOptions::default())?;
        println!("{}", serde_json::to_string_pretty(&result)?);
        log
    } else {
        let task: TaskKind = task.as_deref().unwrap_or("table_bussing").parse().map_err(|e: String| anyhow!(e))?;
        let mut events = vec![prompt_at(prompt.as_deref().unwrap_or(default_prompt(task)), 0.0)];
        for i in interject {
            events.push(parse_interjection(i)?);
        }
        let log = run_session(SessionConfig::new(task, pol, seed), &events)?;
        let end = log.records.last().map(|r| r.payload.clone()).unwrap_or_default();
        println!(
            "records={} gaps={} end={} goal_satisfied={} hash={}",
            log.records.len(),
            detect_gaps(&log).len(),
            end["reason"],
            end["goal_satisfied"],
            log.hash()
        );
        log
    };
    if let Some(p) = log_path {
        log.write(&p).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn default_prompt(task: TaskKind) -> &'static str {
    match task {
        TaskKind::TableBussing => "clean up the table",
        TaskKind::SandwichMaking => "make me a sandwich",
        TaskKind::GroceryShopping => "Can you get me something sweet?",
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match Cli::parse().cmd {
        Cmd::Serve { port, log_dir, speed } => {
            if !(speed > 0.0) {
                bail!("speed must be positive");
            }
            let cfg = ServerConfig { log_dir: Some(log_dir), speed, tick: Duration::from_millis(20) };
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(serve(SocketAddr::from(([0, 0, 0, 0], port)), cfg))?;
        }
        Cmd::Run { task, policy, suite, trial, prompt, interject, seed, log } => {
            run(task, &policy, suite, trial, prompt, &interject, seed, log)?
        }
        Cmd::Replay { log } => {
            for f in replay(&log).with_context(|| format!("replaying {}", log.display()))? {
                println!("{f}");
            }
        }
        Cmd::Bench { suite, policies, trials, seed, out } => {
            if suite.is_empty() {
                bail!("--suite is required");
            }
            let suites = suite.iter().map(|s| load_suite(s)).collect::<Result<Vec<_>>>()?;
            let pols = policies.iter().map(|p| policy(p)).collect::<Result<Vec<_>>>()?;
            let report = run_benchmark(&pols, &suites, trials, seed, &TrialOptions::default())?;
            print!("{}", report.table());
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Cmd::Datagen { demos, out, per_segment, seed, scenarios } => {
            let scenarios = scenarios
                .iter()
                .map(|s| s.parse::<ScenarioType>().map_err(|e| anyhow!(e)))
                .collect::<Result<Vec<_>>>()?;
            let episodes: Vec<Episode> = read_jsonl(&demos)?;
            let records = build_dataset(&episodes, per_segment, seed, &scenarios);
            write_jsonl(&records, &out)?;
            eprintln!("{} interactions from {} episodes", records.len(), episodes.len());
        }
        Cmd::Demos { tasks, count, seed, out } => {
            let mut eps = Vec::new();
            for t in tasks {
                let task: TaskKind = t.parse().map_err(|e: String| anyhow!(e))?;
                eps.extend(bundled_demos(task, count, seed));
            }
            write_jsonl(&eps, &out)?;
            eprintln!("{} episodes", eps.len());
        }
        Cmd::ExportSuites { dir } => {
            for p in export_suites(&dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
