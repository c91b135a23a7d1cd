use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use precedence_core::config::{parse_config, SEED_ENV};
use precedence_core::freedom::postulate_report;
use precedence_core::ledger::{Ledger, MeasurementKey, PreparationKey, Stream};
use precedence_core::runner;

#[derive(Parser)]
#[command(name = "precedence", about = "Precedence dynamics studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ledger utilities.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Print the freedom-counting and postulate checks as JSON.
    Postulates {
        #[arg(long, default_value_t = 5)]
        max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the version.
    Version,
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Show per-stream counts and the first and last outcomes.
    Inspect {
        path: PathBuf,
        /// Only the stream `PREP:MEAS` (hex keys).
        #[arg(long)]
        key: Option<String>,
        /// Outcomes shown at each end of a stream.
        #[arg(long, default_value_t = 10)]
        head: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => run(config, out),
        Command::Ledger {
            command: LedgerCommand::Inspect { path, key, head },
        } => inspect(path, key, head),
        Command::Postulates { max_n, seed } => {
            let report = postulate_report(max_n, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.all_pass {
                bail!("some postulate checks failed");
            }
            Ok(())
        }
        Command::Version => {
            println!("precedence {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn run(config_path: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(&config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut config = parse_config(&text).with_context(|| format!("in {}", config_path.display()))?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let seed = config.resolve_seed(env_seed.as_deref())?;
    let dir = out.unwrap_or_else(|| config.output_dir.clone());
    let output = runner::run(&config, &dir)?;
    println!("study: {}", config.study.as_str());
    println!("seed: {seed}");
    println!("output: {}", output.dir.display());
    for f in &output.files {
        println!("  {f}");
    }
    Ok(())
}

fn parse_key(key: &str) -> Result<(PreparationKey, MeasurementKey)> {
    let (p, m) = key
        .split_once(':')
        .ok_or_else(|| anyhow!("--key must be PREP:MEAS, got {key:?}"))?;
    let p = p.parse().with_context(|| format!("preparation key {p:?}"))?;
    let m = m.parse().with_context(|| format!("measurement key {m:?}"))?;
    Ok((p, m))
}

fn inspect(path: PathBuf, key: Option<String>, head: usize) -> Result<()> {
    let ledger = Ledger::load(&path)?;
    let ids = match key {
        Some(k) => {
            let (p, m) = parse_key(&k)?;
            if ledger.stream(&p, &m).is_none() {
                bail!("no stream {p}:{m} in {}", path.display());
            }
            vec![(p, m)]
        }
        None => ledger.stream_ids(),
    };
    println!("ledger: {}", path.display());
    println!("records: {}", ledger.len());
    println!("streams: {}", ledger.stream_ids().len());
    for (p, m) in ids {
        let stream = ledger.stream(&p, &m).expect("listed stream");
        print_stream(&p, &m, stream, head);
    }
    Ok(())
}

fn print_stream(p: &PreparationKey, m: &MeasurementKey, stream: &Stream, head: usize) {
    let outcomes = stream.outcomes();
    println!("stream {p}:{m}");
    println!("  precedents: {}", stream.len());
    println!("  counts: {:?}", stream.counts());
    if outcomes.len() <= 2 * head {
        println!("  outcomes: {outcomes:?}");
    } else {
        println!("  head: {:?}", &outcomes[..head]);
        println!("  tail: {:?}", &outcomes[outcomes.len() - head..]);
    }
}
