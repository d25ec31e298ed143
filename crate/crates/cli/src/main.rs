//! `meterlink`: outage sweeps, oracle validation, sampling, reconstruction
//! evaluation and gateway range planning from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meterlink_core::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "meterlink",
    version,
    about = "LoRa smart-meter outage, sampling and range planning"
)]
pub struct Cli {
    /// key=value config file; defaults to $METERLINK_CONFIG when set
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    pub parallel: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep outage or effective bit-rate along one parameter
    Link(LinkCmd),
    /// Compare closed-form outage with the Monte Carlo oracle
    Validate(ValidateCmd),
    /// Sample a corpus with time-based and/or event-based strategies
    Sample(SampleCmd),
    /// Score reconstruction quality under sample loss
    Evaluate(EvaluateCmd),
    /// Maximum gateway range for an outage or quality target
    Plan(PlanCmd),
    /// Write a synthetic household corpus
    GenSynthetic(GenSyntheticCmd),
}

/// Link-model overrides; anything unset falls back to the config file, then
/// to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct LinkArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta_cosf: Option<f64>,
    #[arg(long)]
    pub p_active: Option<f64>,
    #[arg(long)]
    pub p_sf: Option<f64>,
    #[arg(long)]
    pub lambda_sf: Option<f64>,
    #[arg(long)]
    pub lambda_i: Option<f64>,
    /// canonical or as_printed
    #[arg(long)]
    pub k_variant: Option<String>,
    /// SF table override CSV (sf,bit_rate_kbps,sir_threshold)
    #[arg(long)]
    pub sf_table: Option<PathBuf>,
    /// Accept SF tables that are not monotone in SF
    #[arg(long)]
    pub allow_non_monotone: bool,
}

#[derive(Debug, Args)]
pub struct LinkCmd {
    /// lambda_sf, lambda_i or r
    #[arg(long)]
    pub axis: String,
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    /// Explicit comma-separated grid (overrides --from/--to/--points)
    #[arg(long)]
    pub grid: Option<String>,
    /// outage or bitrate
    #[arg(long, default_value = "outage")]
    pub metric: String,
    /// Per-SF columns assume every meter uses that SF
    #[arg(long)]
    pub single_sf: bool,
    /// Link distance for axes other than r, km
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub link: LinkArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateCmd {
    /// Comma-separated λ_SF values (empty string for none)
    #[arg(long, default_value = "0.5,1,2,4")]
    pub lambda_sf_grid: String,
    #[arg(long, default_value = "0.01,0.05,0.1,0.2")]
    pub lambda_i_grid: String,
    #[arg(long, default_value = "0.5,1.5,3")]
    pub r_grid: String,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub link: LinkArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    /// Time-based sampling interval, minutes
    #[arg(long, default_value_t = 30)]
    pub interval_min: u32,
    /// Initial energy threshold, kWh
    #[arg(long, default_value_t = 2.0)]
    pub e_lim: f64,
    /// Initial power-change threshold, kW
    #[arg(long, default_value_t = 1.0)]
    pub p_lim: f64,
    /// Power threshold increment, kW
    #[arg(long, default_value_t = 0.5)]
    pub p_step: f64,
    /// Use the initial event thresholds as given
    #[arg(long)]
    pub no_tune: bool,
}

#[derive(Debug, Args)]
pub struct SampleCmd {
    /// Corpus directory or single CSV file
    #[arg(long)]
    pub corpus: PathBuf,
    /// time, event or both
    #[arg(long, default_value = "both")]
    pub strategy: String,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated strategies
    #[arg(long, default_value = "time,event")]
    pub strategies: String,
    /// Comma-separated outage probabilities
    #[arg(long, default_value = "0,0.1,0.2,0.3")]
    pub outage: String,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanCmd {
    /// Maximum tolerable average outage
    #[arg(long)]
    pub target_outage: Option<f64>,
    /// Maximum CV(RMSE) for the chosen household quantile
    #[arg(long, conflicts_with = "target_outage")]
    pub max_cv: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub quantile: f64,
    #[arg(long, default_value = "event")]
    pub strategy: String,
    /// Evaluation results CSV from `evaluate`
    #[arg(long)]
    pub evaluation: Option<PathBuf>,
    #[command(flatten)]
    pub link: LinkArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticCmd {
    #[arg(long, default_value_t = 50)]
    pub households: usize,
    #[arg(long, default_value_t = 7)]
    pub days: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// kW
    #[arg(long)]
    pub base_load: Option<f64>,
    #[arg(long)]
    pub events_per_day: Option<f64>,
    /// Diurnal modulation amplitude in [0, 1]
    #[arg(long)]
    pub diurnal_amplitude: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reports --help/--version as "errors" with exit code 0
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
