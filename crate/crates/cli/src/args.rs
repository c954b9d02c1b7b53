//! Command arguments. The same structs are parsed from the command line and
//! stored in run manifests, so a manifest replays the exact invocation.

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub const DEFAULT_IFRS: [f64; 3] = [0.005, 0.01, 0.015];

#[derive(Debug, Parser)]
#[command(name = "epifit", version, about = "Fit a change-point SIR model to daily death counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize, PartialEq)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Run one chain set per (region, IFR) and write chains and summaries.
    Fit(FitArgs),
    /// Project deaths forward from a fitted run.
    Forecast(ForecastArgs),
    /// Generate synthetic deaths and a trajectory from fixed parameters.
    Simulate(SimulateArgs),
    /// Re-render summary tables from stored chains.
    Summarize(SummarizeArgs),
    /// Replay the command recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct DelayArgs {
    /// Seed for the Monte Carlo delay distribution.
    #[arg(long, default_value_t = 1)]
    pub delay_seed: u64,
    /// Monte Carlo draws for the delay distribution.
    #[arg(long, default_value_t = epifit_core::delay_dist::DEFAULT_DELAY_SAMPLES)]
    pub delay_samples: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct FitArgs {
    /// NYT-format cumulative counts CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Region config file; repeat for several regions.
    #[arg(long = "region-config", required = true)]
    pub region_configs: Vec<PathBuf>,
    /// Comma-separated IFR scenarios.
    #[arg(long = "p", value_delimiter = ',', default_values_t = DEFAULT_IFRS)]
    pub ifrs: Vec<f64>,
    /// Total iterations per chain (default 50,000; 100,000 with --heavy).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Iteration at which covariance adaptation begins (default iters / 5).
    #[arg(long)]
    pub adapt_start: Option<usize>,
    /// Burn-in iterations discarded (default iters / 2).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Double the default schedule.
    #[arg(long)]
    pub heavy: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Independent chains per (region, IFR), pooled after fitting.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[command(flatten)]
    pub delay: DelayArgs,
    /// Seed for in-sample predictive draws.
    #[arg(long, default_value_t = 1)]
    pub predictive_seed: u64,
    /// Write burn-in iterations to the chain files as well.
    #[arg(long)]
    pub keep_burn_in: bool,
    /// Known generating parameters (a `truth.txt` from `simulate`) for a
    /// recovery report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write SVG figures.
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct ForecastArgs {
    /// Output directory of a previous `fit`.
    #[arg(long)]
    pub run: PathBuf,
    /// Forecast horizon in days (at most 60).
    #[arg(long, default_value_t = 21)]
    pub days: usize,
    /// IFR scenario to forecast; defaults to each region's configured IFR.
    #[arg(long = "p")]
    pub ifr: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub svg: bool,
    /// Where to write outputs; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct SimulateArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub gamma: f64,
    /// Epidemic start, days since 2020-01-01.
    #[arg(long = "T0")]
    pub t0: f64,
    #[arg(long)]
    pub phi: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub population: u64,
    /// Intervention date (YYYY-MM-DD).
    #[arg(long)]
    pub t1: NaiveDate,
    #[arg(long)]
    pub seed: u64,
    /// Last simulated day (default: 35 days after the intervention).
    #[arg(long)]
    pub end_date: Option<NaiveDate>,
    #[arg(long, default_value = "Synthetic")]
    pub region_id: String,
    #[command(flatten)]
    pub delay: DelayArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct SummarizeArgs {
    /// Output directory of a previous `fit`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Redirect outputs; defaults to the recorded output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
