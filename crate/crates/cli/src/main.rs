//! `pricelab`: generate a synthetic comparison-site market, estimate its demand
//! curve from quote logs, train actor-critic pricing agents against the fitted
//! simulator, and compare seven pricing policies under shared random numbers.
//!
//! Exit codes: 0 success, 2 configuration problems (bad flags, bad config
//! keys), 3 artifact problems (missing, corrupt, or version-mismatched files).

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand, ValueEnum};
use pricelab_core::simenv::RewardMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum AppError {
    /// Configuration is wrong (exit 2).
    Config(String),
    /// An artifact is missing, corrupt, or has the wrong version (exit 3).
    Artifact(String),
    /// Everything else (exit 1).
    Other(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "config error: {msg}"),
            AppError::Artifact(msg) => write!(f, "artifact error: {msg}"),
            AppError::Other(msg) => write!(f, "error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "pricelab", version, about)]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override; otherwise the config's seed applies.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Dense,
    Sparse,
}

impl From<ModeArg> for RewardMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Dense => RewardMode::Dense,
            ModeArg::Sparse => RewardMode::Sparse,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset: train/test CSVs and the resampled pool.
    GenData,
    /// Fit the binned monotone conversion model from the pool.
    FitConversion {
        /// Training dataset CSV (defaults to <out>/train.csv).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Training pool JSONL (defaults to <out>/pool.jsonl).
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Train an actor-critic policy against the fitted simulator.
    Train {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Training dataset CSV (defaults to <out>/train.csv).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Conversion model JSON (defaults to <out>/conversion_model.json).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write every simulator step as JSON lines to this file
        /// (debugging aid; large).
        #[arg(long)]
        step_log: Option<PathBuf>,
    },
    /// Evaluate the seven-agent roster on a test dataset.
    Evaluate {
        /// Directory holding policy_dense.json, policy_sparse.json, and
        /// conversion_model.json.
        #[arg(long)]
        policies: PathBuf,
        /// Test dataset CSV.
        #[arg(long)]
        data: PathBuf,
    },
    /// Re-render the chart and ranking from an existing curves CSV.
    Report {
        #[arg(long)]
        curves: PathBuf,
    },
    /// Run the whole pipeline: gen-data, fit-conversion, both trainings,
    /// evaluate.
    RunAll,
}

fn run(cli: Cli) -> Result<(), AppError> {
    let (run_config, config_text) =
        config::load_config(cli.config.as_deref()).map_err(AppError::Config)?;
    let seed = cli.seed.unwrap_or(run_config.seed);
    let out = cli.out;

    match cli.command {
        Command::GenData => commands::gen_data(&run_config, &config_text, seed, &out),
        Command::FitConversion { data, pool } => {
            let data = data.unwrap_or_else(|| out.join(commands::TRAIN_CSV));
            let pool = pool.unwrap_or_else(|| out.join(commands::POOL_JSONL));
            commands::fit_conversion(&config_text, seed, &data, &pool, &out)
        }
        Command::Train {
            mode,
            data,
            model,
            step_log,
        } => {
            let data = data.unwrap_or_else(|| out.join(commands::TRAIN_CSV));
            let model = model.unwrap_or_else(|| out.join(commands::MODEL_JSON));
            commands::train_policy(
                &run_config,
                &config_text,
                mode.into(),
                seed,
                &data,
                &model,
                step_log.as_deref(),
                &out,
            )
        }
        Command::Evaluate { policies, data } => {
            commands::evaluate_policies(&run_config, &config_text, seed, &policies, &data, &out)
        }
        Command::Report { curves } => {
            commands::report_from_curves(&config_text, seed, &curves, &out)
        }
        Command::RunAll => commands::run_all(&run_config, &config_text, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            match err {
                AppError::Config(_) => ExitCode::from(2),
                AppError::Artifact(_) => ExitCode::from(3),
                AppError::Other(_) => ExitCode::FAILURE,
            }
        }
    }
}
