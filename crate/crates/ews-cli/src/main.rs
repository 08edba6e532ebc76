//! `ews`: config-driven runner for the crisis early-warning pipeline.
//!
//! Subcommands map to pipeline stages: `simulate` emits synthetic panels,
//! `classify` builds crisis labels and the misspecification report,
//! `train-eval` fits the predictor grid and scores it, `backtest` turns
//! forecasts into portfolio tracks with the variance reality check, and
//! `report` summarizes whatever output files exist.
//!
//! Exit codes: 0 success, 1 runtime model failure, 2 config/validation
//! failure.

mod cmd_backtest;
mod cmd_classify;
mod cmd_report;
mod cmd_simulate;
mod cmd_train_eval;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

/// Error carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Configuration or validation problem (exit 2).
    Config(String),
    /// Model or I/O failure at run time (exit 1).
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ews_core::EwsError> for CliError {
    fn from(e: ews_core::EwsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "ews", version, about = "Market-crisis early-warning pipeline")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, default_value = "config/default.toml")]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.jobs` (worker threads; 0 = library default).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `run.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate a regime-switching return panel with ground-truth labels.
    Simulate,
    /// Build crisis labels and the misspecification report.
    Classify,
    /// Fit the predictor grid and emit the evaluation report.
    TrainEval,
    /// Back-test strategies and run the variance reality check.
    Backtest,
    /// Summarize the output directory.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Classify => "classify",
            Command::TrainEval => "train-eval",
            Command::Backtest => "backtest",
            Command::Report => "report",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.clone();
    }
    if cfg.run.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cfg.run.out_dir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", cfg.run.out_dir.display()))
    })?;

    let stage = cli.command.name();
    let run_id = format!("{stage}-{:08x}", cfg.run.seed);
    let started = Instant::now();
    eprintln!("run={run_id} stage={stage} seed={} status=start", cfg.run.seed);
    let result = match cli.command {
        Command::Simulate => cmd_simulate::run(&cfg),
        Command::Classify => cmd_classify::run(&cfg),
        Command::TrainEval => cmd_train_eval::run(&cfg),
        Command::Backtest => cmd_backtest::run(&cfg),
        Command::Report => cmd_report::run(&cfg),
    };
    let wall_ms = started.elapsed().as_millis();
    let status = if result.is_ok() { "ok" } else { "failed" };
    eprintln!(
        "run={run_id} stage={stage} seed={} wall_ms={wall_ms} status={status}",
        cfg.run.seed
    );
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Runtime(_) => ExitCode::from(1),
                CliError::Config(_) => ExitCode::from(2),
            }
        }
    }
}

/// Writes a file, mapping I/O failures to runtime errors.
pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}
