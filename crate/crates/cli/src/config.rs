//! Run configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use epiforecast::errmodel::{ErrorFamily, ErrorSpec, DEFAULT_NU};
use epiforecast::growth::Family;
use epiforecast::mcmc::SamplerConfig;
use epiforecast::multiphase::MultiphaseConfig;
use epiforecast::prior::PriorConfig;
use epiforecast::rtestim::{DEFAULT_MAX_LAG, DEFAULT_SI_MEAN, DEFAULT_SI_SD};

use crate::cli::{Flags, SiFlags};
use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub region: Option<String>,
    /// Training end (day index); the whole series when absent.
    pub m: Option<usize>,
    /// Forecast horizon in days.
    pub f: usize,
    pub family: ErrorFamily,
    pub growth: Family,
    pub allow_negative_mean: bool,
    pub seed: u64,
    pub out: PathBuf,
    /// Write outputs but exit 0 when R-hat exceeds the threshold.
    pub allow_unconverged: bool,
    /// Clamp negative daily counts to zero instead of rejecting the input.
    pub clamp_negative: bool,
    pub sampler: SamplerSettings,
    pub prior: PriorConfig,
    pub multiphase: MultiphaseSettings,
    pub si: SiSettings,
    pub simulate: SimSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            region: None,
            m: None,
            f: 20,
            family: ErrorFamily::Pls,
            growth: Family::Richards,
            allow_negative_mean: false,
            seed: SamplerConfig::default().seed,
            out: PathBuf::from("out"),
            allow_unconverged: false,
            clamp_negative: false,
            sampler: SamplerSettings::default(),
            prior: PriorConfig::default(),
            multiphase: MultiphaseSettings::default(),
            si: SiSettings::default(),
            simulate: SimSettings::default(),
        }
    }
}

/// Sampler settings; the seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub target_accept: f64,
    pub adapt_window: usize,
    pub rhat_threshold: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            chains: d.n_chains,
            iterations: d.n_iter,
            burn_in: d.burn_in,
            thin: d.thin,
            target_accept: d.target_accept,
            adapt_window: d.adapt_window,
            rhat_threshold: d.rhat_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiphaseSettings {
    pub phases: usize,
    pub kappa_prior_mean: f64,
    pub eta_prior_mean: f64,
    pub kappa_init: Option<Vec<f64>>,
    pub kappa_step: f64,
}

impl Default for MultiphaseSettings {
    fn default() -> Self {
        let d = MultiphaseConfig::default();
        Self {
            phases: d.n_phases,
            kappa_prior_mean: d.kappa_prior_mean,
            eta_prior_mean: d.eta_prior_mean,
            kappa_init: d.kappa_init,
            kappa_step: d.kappa_step,
        }
    }
}

/// Serial interval: one of (shape, rate), a quantile pair, a component
/// file to pool, or (mean, sd), checked in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiSettings {
    pub mean: f64,
    pub sd: f64,
    pub shape: Option<f64>,
    pub rate: Option<f64>,
    /// Two `[probability, days]` pairs.
    pub quantiles: Option<Vec<[f64; 2]>>,
    /// File with one `shape rate` pair per line.
    pub components: Option<PathBuf>,
    pub pool_draws: usize,
    pub max_lag: usize,
    pub same_day: bool,
    /// Directory of a `fit` or `multiphase` run whose trajectories are used.
    pub from: Option<PathBuf>,
}

impl Default for SiSettings {
    fn default() -> Self {
        Self {
            mean: DEFAULT_SI_MEAN,
            sd: DEFAULT_SI_SD,
            shape: None,
            rate: None,
            quantiles: None,
            components: None,
            pool_draws: 1_000_000,
            max_lag: DEFAULT_MAX_LAG,
            same_day: true,
            from: None,
        }
    }
}

/// Generator settings for `simulate`. The error family is the run family;
/// `error_hyper` is lambda for pg and sigma for pln/pls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub days: usize,
    pub r: f64,
    pub k: f64,
    pub a: f64,
    pub c1: u64,
    pub error_hyper: Option<f64>,
    pub deaths: bool,
    pub phi: f64,
    pub r_d: f64,
    pub a_d: f64,
    pub d1: u64,
    /// Second phase, used when `kappa` is set.
    pub kappa: Option<f64>,
    pub r_2: f64,
    pub a_2: f64,
    pub eta: f64,
    pub deterministic: bool,
    pub origin: String,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            days: 120,
            r: 0.25,
            k: 200_000.0,
            a: 0.5,
            c1: 10,
            error_hyper: None,
            deaths: true,
            phi: 0.1,
            r_d: 0.2,
            a_d: 0.5,
            d1: 1,
            kappa: None,
            r_2: 0.05,
            a_2: 1.0,
            eta: 2.0,
            deterministic: false,
            origin: "2020-02-01".to_string(),
        }
    }
}

impl SimSettings {
    pub fn error_spec(&self, family: ErrorFamily) -> ErrorSpec {
        match family {
            ErrorFamily::Pg => ErrorSpec::PoissonGamma { lambda: self.error_hyper.unwrap_or(10.0) },
            ErrorFamily::Pln => ErrorSpec::PoissonLognormal { sigma: self.error_hyper.unwrap_or(0.3) },
            ErrorFamily::Pls => ErrorSpec::PoissonLogStudent { sigma: self.error_hyper.unwrap_or(0.3), nu: DEFAULT_NU },
        }
    }
}

impl RunConfig {
    /// Defaults, then the file named by `--config`, then the flags.
    pub fn resolve(flags: &Flags, si: Option<&SiFlags>) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        macro_rules! set_opt {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = Some(v);
                }
            };
        }
        set_opt!(cfg.input, flags.input);
        set_opt!(cfg.region, flags.region);
        set_opt!(cfg.m, flags.m);
        set!(cfg.f, flags.f);
        set!(cfg.family, flags.family);
        set!(cfg.growth, flags.growth);
        set!(cfg.seed, flags.seed);
        set!(cfg.out, flags.out);
        set!(cfg.sampler.iterations, flags.iterations);
        set!(cfg.sampler.chains, flags.chains);
        set_opt!(cfg.sampler.burn_in, flags.burn_in);
        set!(cfg.sampler.thin, flags.thin);
        cfg.allow_unconverged |= flags.allow_unconverged;
        cfg.allow_negative_mean |= flags.allow_negative_mean;
        cfg.clamp_negative |= flags.clamp_negative;
        if let Some(si) = si {
            set!(cfg.si.mean, si.si_mean);
            set!(cfg.si.sd, si.si_sd);
            set_opt!(cfg.si.shape, si.si_shape);
            set_opt!(cfg.si.rate, si.si_rate);
            set_opt!(cfg.si.components, si.si_components);
            set!(cfg.si.max_lag, si.si_max_lag);
            set_opt!(cfg.si.from, si.from);
            if si.no_same_day {
                cfg.si.same_day = false;
            }
            if let Some(q) = &si.si_quantiles {
                cfg.si.quantiles = Some(parse_quantile_pairs(q)?);
            }
        }
        if cfg.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("seed must be below 2^63, got {}", cfg.seed)));
        }
        Ok(cfg)
    }

    /// Reads a configuration file, or the `[config]` table of a run manifest.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let table = match (table.get("run"), table.get("config")) {
            (Some(_), Some(toml::Value::Table(cfg))) => cfg.clone(),
            _ => table,
        };
        table.try_into().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            n_chains: s.chains,
            n_iter: s.iterations,
            burn_in: s.burn_in,
            thin: s.thin,
            target_accept: s.target_accept,
            adapt_window: s.adapt_window,
            rhat_threshold: s.rhat_threshold,
            seed: self.seed,
        }
    }

    pub fn multiphase_config(&self) -> MultiphaseConfig {
        let mp = &self.multiphase;
        MultiphaseConfig {
            n_phases: mp.phases,
            growth: self.growth,
            error: self.family,
            kappa_prior_mean: mp.kappa_prior_mean,
            eta_prior_mean: mp.eta_prior_mean,
            kappa_init: mp.kappa_init.clone(),
            kappa_step: mp.kappa_step,
            prior: self.prior.clone(),
        }
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        let path = self.input.as_deref().ok_or_else(|| CliError::Config("--input is required".into()))?;
        if !path.is_file() {
            return Err(CliError::Config(format!("input file {} does not exist", path.display())));
        }
        Ok(path)
    }
}

/// Parses `p1:v1,p2:v2`.
fn parse_quantile_pairs(s: &str) -> Result<Vec<[f64; 2]>, CliError> {
    let bad = || CliError::Config(format!("expected 'p1:days1,p2:days2', got '{s}'"));
    let pairs = s
        .split(',')
        .map(|pair| {
            let (p, v) = pair.split_once(':').ok_or_else(bad)?;
            Ok([p.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    if pairs.len() != 2 {
        return Err(bad());
    }
    Ok(pairs)
}
