use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use epiforecast::errmodel::ErrorFamily;
use epiforecast::growth::Family;

#[derive(Debug, Parser)]
#[command(name = "epiforecast", version, about = "Fit, forecast and validate Richards-curve epidemic models")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Input CSV (ECDC download or a series written by `ingest`/`simulate`)
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Region code to select from a multi-region download
    #[arg(long, global = true)]
    pub region: Option<String>,
    /// Training end (day index); defaults to the last day
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Forecast horizon in days
    #[arg(long, global = true)]
    pub f: Option<usize>,
    /// Error family: pg, pln or pls
    #[arg(long, global = true)]
    pub family: Option<ErrorFamily>,
    /// Growth curve: richards, logistic, gompertz or rosenzweig
    #[arg(long, global = true)]
    pub growth: Option<Family>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// MCMC iterations per chain
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    #[arg(long, global = true)]
    pub thin: Option<usize>,
    /// Exit 0 even when R-hat exceeds the threshold
    #[arg(long, global = true)]
    pub allow_unconverged: bool,
    /// Permit growth curves whose mean can turn negative
    #[arg(long, global = true)]
    pub allow_negative_mean: bool,
    /// Clamp negative daily counts to zero instead of failing
    #[arg(long, global = true)]
    pub clamp_negative: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SiFlags {
    /// Directory of a `fit` or `multiphase` run to take trajectories from
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub si_mean: Option<f64>,
    #[arg(long)]
    pub si_sd: Option<f64>,
    #[arg(long)]
    pub si_shape: Option<f64>,
    #[arg(long)]
    pub si_rate: Option<f64>,
    /// Two quantiles as `p1:days1,p2:days2`
    #[arg(long)]
    pub si_quantiles: Option<String>,
    /// File of gamma components (`shape rate` per line) to pool
    #[arg(long)]
    pub si_components: Option<PathBuf>,
    #[arg(long)]
    pub si_max_lag: Option<usize>,
    /// Drop the same-day (lag 0) serial-interval weight
    #[arg(long)]
    pub no_same_day: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a raw download into a daily series CSV
    Ingest,
    /// Fit the bivariate cases/deaths model
    Fit,
    /// Fit through day M and forecast F days ahead
    Forecast,
    /// Fit through day M and score the forecast against days M+1..M+F
    Crossval,
    /// Fit the switch-point model to cases
    Multiphase,
    /// Effective reproduction ratios from a run or from observed counts
    Rt(SiFlags),
    /// Generate a synthetic series
    Simulate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Fit => "fit",
            Command::Forecast => "forecast",
            Command::Crossval => "crossval",
            Command::Multiphase => "multiphase",
            Command::Rt(_) => "rt",
            Command::Simulate => "simulate",
        }
    }
}
