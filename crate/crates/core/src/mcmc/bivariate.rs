//! Joint Richards model for new cases and new deaths.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EpidemicSeries;
use crate::errmodel::{log_effect_prior, log_obs, ErrorFamily, ErrorSpec};
use crate::error::{Error, Result};
use crate::growth::{pilot_fit, turning_point, Family, GrowthParams, PilotFit};
use crate::prior::{JointPrior, PriorConfig, SupportViolation, ThetaBivariate};

use super::sampler::{run_chains, Model, OutcomeData, ParamInfo, PosteriorDraws, SamplerConfig, Transform};

pub const CASES: usize = 0;
pub const DEATHS: usize = 1;

const R_C: usize = 0;
const A_C: usize = 1;
const K_C: usize = 2;
const R_D: usize = 3;
const A_D: usize = 4;
const PHI: usize = 5;
const H_C: usize = 6;
const H_D: usize = 7;

/// Days past the training end searched for a turning point.
const TURNING_POINT_HORIZON: usize = 1000;

/// Model choices for a bivariate fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub growth: Family,
    pub error_cases: ErrorFamily,
    pub error_deaths: ErrorFamily,
    /// Required to use a growth family whose mean can be negative.
    pub allow_negative_mean: bool,
    pub prior: PriorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            growth: Family::Richards,
            error_cases: ErrorFamily::Pls,
            error_deaths: ErrorFamily::Pls,
            allow_negative_mean: false,
            prior: PriorConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn with_family(family: ErrorFamily) -> Self {
        Self { error_cases: family, error_deaths: family, ..Self::default() }
    }
}

/// Per-day multiplicative effects of one outcome, aligned with its
/// likelihood days; `mix` is present for the log-Student family.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEffects {
    pub eps: Vec<f64>,
    pub mix: Option<Vec<f64>>,
}

/// First day contributing to an outcome's likelihood: the day after the
/// cumulative count first becomes positive.
pub fn first_likelihood_day(cum: &[u64]) -> usize {
    cum.iter().position(|&c| c > 0).map_or(cum.len() + 1, |i| i + 2)
}

/// The bivariate posterior as a [`Model`].
#[derive(Debug, Clone)]
pub struct BivariateModel {
    config: ModelConfig,
    prior: JointPrior,
    params: Vec<ParamInfo>,
    outcomes: Vec<OutcomeData>,
    cum: [Vec<f64>; 2],
    t_max: usize,
    pilot: Option<[PilotFit; 2]>,
}

impl BivariateModel {
    pub fn new(series: &EpidemicSeries, t_max: usize, config: &ModelConfig) -> Result<Self> {
        if t_max < 3 || t_max > series.len() {
            return Err(Error::Config(format!(
                "training end must lie in 3..={} (got {t_max})",
                series.len()
            )));
        }
        if !config.growth.is_bounded() && !config.allow_negative_mean {
            return Err(Error::Config(format!(
                "the {:?} mean is negative below K; pass allow_negative_mean to use it in a likelihood",
                config.growth
            )));
        }
        let cum_c: Vec<f64> = series.cum_cases()[..t_max].iter().map(|&c| c as f64).collect();
        let cum_d: Vec<f64> = series.cum_deaths()[..t_max].iter().map(|&c| c as f64).collect();
        let prior = config.prior.resolve(&cum_c, t_max)?;

        let cases = OutcomeData::from_daily("cases", series.cases(), series.cum_cases(), 2, t_max);
        let first_d = first_likelihood_day(&series.cum_deaths()[..t_max]);
        let deaths = OutcomeData::from_daily("deaths", series.deaths(), series.cum_deaths(), first_d, t_max);

        let shape = if matches!(config.growth, Family::Richards | Family::Rosenzweig) {
            Transform::Log
        } else {
            Transform::Fixed
        };
        let hyper_name = |f: ErrorFamily, suffix: &str| match f {
            ErrorFamily::Pg => format!("lambda_{suffix}"),
            ErrorFamily::Pln | ErrorFamily::Pls => format!("prec_{suffix}"),
        };
        let params = vec![
            ParamInfo::new("r_c", Transform::Log).in_mean(&[CASES]),
            ParamInfo::new("a_c", shape).in_mean(&[CASES]),
            ParamInfo::new("K_c", Transform::Log).in_mean(&[CASES, DEATHS]),
            ParamInfo::new("r_d", Transform::Log).in_mean(&[DEATHS]),
            ParamInfo::new("a_d", shape).in_mean(&[DEATHS]),
            ParamInfo::new("phi", Transform::Logit).in_mean(&[DEATHS]),
            ParamInfo::new(&hyper_name(config.error_cases, "c"), Transform::Log).in_error(&[CASES]).scale(0.3),
            ParamInfo::new(&hyper_name(config.error_deaths, "d"), Transform::Log).in_error(&[DEATHS]).scale(0.3),
        ];
        let pilot_of = |o: &OutcomeData, k_min: f64| pilot_fit(config.growth, &o.prev_cum, &o.counts, k_min);
        let pilot = match (pilot_of(&cases, cum_c[t_max - 1]), pilot_of(&deaths, cum_d[t_max - 1])) {
            (Some(c), Some(d)) if d.params.k < c.params.k => Some([c, d]),
            _ => None,
        };
        Ok(Self {
            config: config.clone(),
            prior,
            params,
            outcomes: vec![cases, deaths],
            cum: [cum_c, cum_d],
            t_max,
            pilot,
        })
    }

    pub fn prior(&self) -> &JointPrior {
        &self.prior
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Names of the summary rows, in table order.
    pub fn summary_names(&self) -> Vec<&'static str> {
        vec!["K_c", "K_d", "r_c", "r_d", "a_c", "a_d", "phi", "tau_c", "tau_d"]
    }

    /// Structured view of a draw's natural-scale values.
    pub fn theta(&self, values: &[f64]) -> ThetaBivariate {
        ThetaBivariate {
            r_c: values[R_C],
            a_c: values[A_C],
            k_c: values[K_C],
            r_d: values[R_D],
            a_d: values[A_D],
            phi: values[PHI],
            err_c: self.config.error_cases.spec(values[H_C], self.config.prior.nu),
            err_d: self.config.error_deaths.spec(values[H_D], self.config.prior.nu),
        }
    }

    /// Natural-scale parameter vector of `theta`.
    pub fn values_of(&self, theta: &ThetaBivariate) -> Vec<f64> {
        vec![
            theta.r_c,
            theta.a_c,
            theta.k_c,
            theta.r_d,
            theta.a_d,
            theta.phi,
            theta.err_c.hyper(),
            theta.err_d.hyper(),
        ]
    }

    /// Growth curve of outcome `o` for the given parameters.
    pub fn growth_params(&self, values: &[f64], o: usize) -> GrowthParams {
        let (r, k, a) = match o {
            CASES => (values[R_C], values[K_C], values[A_C]),
            _ => (values[R_D], values[PHI] * values[K_C], values[A_D]),
        };
        GrowthParams { family: self.config.growth, r, k, a }
    }

    /// Cumulative trajectory used for turning points: the observed counts,
    /// extended past the training end by the deterministic recursion until
    /// the peak threshold is crossed.
    fn turning_trajectory(&self, g: &GrowthParams, o: usize) -> Vec<f64> {
        let mut traj = self.cum[o].clone();
        let threshold = g.peak_threshold();
        let mut c = *traj.last().expect("t_max >= 3");
        let mut steps = 0;
        while c < threshold && c > 0.0 && steps < TURNING_POINT_HORIZON {
            c += g.rate(c).max(0.0);
            traj.push(c);
            steps += 1;
        }
        traj
    }
}

impl Model for BivariateModel {
    fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    fn outcomes(&self) -> &[OutcomeData] {
        &self.outcomes
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let t = self.theta(theta);
        if !(t.k_c > self.cum[CASES][self.t_max - 1]) || !(t.k_d() > self.cum[DEATHS][self.t_max - 1]) {
            return f64::NEG_INFINITY;
        }
        self.prior.log_prior(&t).unwrap_or(f64::NEG_INFINITY)
    }

    fn mean_det(&self, theta: &[f64], o: usize, out: &mut [f64]) -> bool {
        let g = self.growth_params(theta, o);
        for (m, &c) in out.iter_mut().zip(&self.outcomes[o].prev_cum) {
            *m = g.rate(c);
            if !(*m > 0.0) || !m.is_finite() {
                return false;
            }
        }
        true
    }

    fn error_spec(&self, theta: &[f64], o: usize) -> ErrorSpec {
        match o {
            CASES => self.config.error_cases.spec(theta[H_C], self.config.prior.nu),
            _ => self.config.error_deaths.spec(theta[H_D], self.config.prior.nu),
        }
    }

    fn initial_theta(&self, _chain: usize, attempt: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let spread = 0.1 * (1.0 + attempt as f64 / 10.0);
        let mut jitter = || 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0);
        let c_max = self.cum[CASES][self.t_max - 1];
        let d_max = self.cum[DEATHS][self.t_max - 1];
        if let Some([pc, pd]) = self.pilot.filter(|_| attempt < 50) {
            let k_c = c_max + (pc.params.k - c_max) * jitter();
            let k_d = d_max + (pd.params.k - d_max) * jitter();
            let phi = (k_d / k_c).clamp(1e-6, 1.0 - 1e-6);
            return vec![
                pc.params.r * jitter(),
                pc.params.a * jitter(),
                k_c,
                pd.params.r * jitter(),
                pd.params.a * jitter(),
                phi,
                self.config.error_cases.hyper_from_overdispersion(pc.overdispersion) * jitter(),
                self.config.error_deaths.hyper_from_overdispersion(pd.overdispersion) * jitter(),
            ];
        }
        let k_e = self.prior.k.median();
        let k_c = if k_e > c_max { k_e } else { 2.0 * c_max } * jitter();
        let mut phi = self.prior.cfr_ref;
        if phi * k_c <= d_max {
            phi = (2.0 * d_max / k_c).min(0.99);
        }
        let phi = (phi * jitter()).clamp(1e-6, 1.0 - 1e-6);
        let mean = self.prior.rate_mean;
        vec![
            mean * jitter(),
            mean * jitter(),
            k_c,
            mean * jitter(),
            mean * jitter(),
            phi,
            10.0 * jitter(),
            10.0 * jitter(),
        ]
    }

    fn predictive_mean(&self, theta: &[f64], o: usize, _t: usize, c_prev: f64) -> f64 {
        self.growth_params(theta, o).rate(c_prev)
    }

    fn observed_cumulative(&self, o: usize) -> &[f64] {
        &self.cum[o]
    }

    fn blocks(&self) -> Vec<Vec<usize>> {
        vec![vec![R_C, A_C, K_C], vec![R_D, A_D, PHI], vec![R_C, A_C, K_C, R_D, A_D, PHI]]
    }

    fn derived_names(&self) -> Vec<String> {
        ["K_d", "tau_c", "tau_d", "tau_c_argmax", "tau_d_argmax"].iter().map(|s| s.to_string()).collect()
    }

    fn derived(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![theta[PHI] * theta[K_C]];
        let mut argmax = Vec::new();
        for o in [CASES, DEATHS] {
            let g = self.growth_params(theta, o);
            let tp = turning_point(&g, &self.turning_trajectory(&g, o));
            out.push(tp.tau);
            argmax.push(tp.argmax_day.map_or(f64::NAN, |d| d as f64));
        }
        out.extend(argmax);
        out
    }
}

/// Joint log posterior density of `theta` and the latent effects (on the
/// `eps` scale) given the series through `t_max`.
///
/// Each outcome's likelihood runs from the day after its cumulative count
/// first becomes positive; `latents` must be aligned with those days.
pub fn log_posterior(
    theta: &ThetaBivariate,
    latents: &[LatentEffects; 2],
    series: &EpidemicSeries,
    prior: &JointPrior,
    growth: Family,
    t_max: usize,
) -> Result<f64, SupportViolation> {
    let c_max = series.cum_cases()[t_max - 1] as f64;
    let d_max = series.cum_deaths()[t_max - 1] as f64;
    if !(theta.k_c > c_max) {
        return Err(SupportViolation { reason: "K_c does not exceed observed cumulative cases" });
    }
    if !(theta.k_d() > d_max) {
        return Err(SupportViolation { reason: "K_d does not exceed observed cumulative deaths" });
    }
    let mut total = prior.log_prior(theta)?;
    let outcomes = [
        (series.cases(), series.cum_cases(), theta.r_c, theta.k_c, theta.a_c, theta.err_c),
        (series.deaths(), series.cum_deaths(), theta.r_d, theta.k_d(), theta.a_d, theta.err_d),
    ];
    for ((daily, cum, r, k, a, spec), lat) in outcomes.into_iter().zip(latents) {
        let g = GrowthParams { family: growth, r, k, a };
        let first = first_likelihood_day(&cum[..t_max]);
        let n = (t_max + 1).saturating_sub(first);
        if lat.eps.len() != n {
            return Err(SupportViolation { reason: "latent effects do not match the likelihood window" });
        }
        for (i, t) in (first..=t_max).enumerate() {
            let mu = g.rate(cum[t - 2] as f64);
            if !(mu > 0.0) {
                return Err(SupportViolation { reason: "non-positive Poisson mean" });
            }
            let eps = lat.eps[i];
            total += log_obs(daily[t - 1], mu, eps)
                .map_err(|_| SupportViolation { reason: "invalid Poisson rate" })?;
            let mix = lat.mix.as_ref().map(|m| m[i]);
            total += log_effect_prior(&spec, eps, mix)
                .map_err(|_| SupportViolation { reason: "invalid latent effect" })?;
        }
    }
    Ok(total)
}

/// Fits the bivariate model to the first `t_max` days.
pub fn fit_bivariate(
    series: &EpidemicSeries,
    t_max: usize,
    config: &ModelConfig,
    sampler: &SamplerConfig,
) -> Result<(BivariateModel, PosteriorDraws)> {
    let model = BivariateModel::new(series, t_max, config)?;
    let draws = run_chains(&model, sampler)?;
    Ok((model, draws))
}
