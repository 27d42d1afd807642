//! Two- and three-phase Richards means with latent switch-points.
//!
//! Phase `p` governs day `t` when `kappa_{p-1} <= t < kappa_p`. Final sizes
//! are chained, `K_2 = eta_1 K_1` and `K_3 = eta_2 K_2`. The fit uses cases
//! only.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{moving_average, EpidemicSeries};
use crate::errmodel::{ErrorFamily, ErrorSpec};
use crate::error::{Error, Result};
use crate::growth::{Family, GrowthParams};
use crate::mcmc::{run_chains, Model, OutcomeData, ParamInfo, PosteriorDraws, SamplerConfig, Transform};
use crate::prior::{ln_exponential_pdf, GammaPrior, LognormalPrior, PriorConfig};

/// Piecewise growth curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    phases: Vec<GrowthParams>,
    switches: Vec<f64>,
}

impl PhasePlan {
    pub fn new(phases: Vec<GrowthParams>, switches: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&phases.len()) {
            return Err(Error::Argument(format!("a plan has 2 or 3 phases, got {}", phases.len())));
        }
        if switches.len() != phases.len() - 1 {
            return Err(Error::Argument(format!(
                "{} phases need {} switch-points, got {}",
                phases.len(),
                phases.len() - 1,
                switches.len()
            )));
        }
        for p in &phases {
            p.validate()?;
        }
        if switches.iter().any(|k| !k.is_finite()) || switches.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!("switch-points must be finite and increasing: {switches:?}")));
        }
        Ok(Self { phases, switches })
    }

    pub fn two_phase(first: GrowthParams, second: GrowthParams, kappa: f64) -> Result<Self> {
        Self::new(vec![first, second], vec![kappa])
    }

    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[GrowthParams] {
        &self.phases
    }

    pub fn switches(&self) -> &[f64] {
        &self.switches
    }

    /// Ratios `K_{p+1} / K_p`.
    pub fn etas(&self) -> Vec<f64> {
        self.phases.windows(2).map(|w| w[1].k / w[0].k).collect()
    }

    /// Index of the phase governing day `t`.
    pub fn active_phase(&self, t: f64) -> usize {
        self.switches.iter().filter(|&&k| t >= k).count()
    }

    /// Unchecked mean on day `t`; non-positive outside the support.
    #[inline]
    pub fn rate(&self, c_prev: f64, t: f64) -> f64 {
        self.phases[self.active_phase(t)].rate(c_prev)
    }
}

/// Expected new cases on day `t` given the previous day's cumulative count.
pub fn multiphase_mean(plan: &PhasePlan, c_prev: f64, t: usize) -> Result<f64> {
    let p = plan.active_phase(t as f64);
    plan.phases[p].mean_incidence(c_prev).map_err(|e| match e {
        Error::Domain(msg) => Error::Domain(format!("phase {}: {msg}", p + 1)),
        other => other,
    })
}

/// Settings of a multiphase fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiphaseConfig {
    pub n_phases: usize,
    pub growth: Family,
    pub error: ErrorFamily,
    /// Mean of the exponential prior on each switch-point.
    pub kappa_prior_mean: f64,
    /// Mean of the exponential prior on each final-size ratio.
    pub eta_prior_mean: f64,
    /// Starting switch-points; chosen from the data when absent.
    pub kappa_init: Option<Vec<f64>>,
    /// Random-walk scale of the switch-point proposals, in days.
    pub kappa_step: f64,
    /// Growth-rate, `K_1` and hyperparameter priors (the fatality settings are unused).
    pub prior: PriorConfig,
}

impl Default for MultiphaseConfig {
    fn default() -> Self {
        Self {
            n_phases: 2,
            growth: Family::Richards,
            error: ErrorFamily::Pls,
            kappa_prior_mean: 150.0,
            eta_prior_mean: 1.0,
            kappa_init: None,
            kappa_step: 5.0,
            prior: PriorConfig::default(),
        }
    }
}

impl MultiphaseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n_phases) {
            return Err(Error::Config(format!("n_phases must be 2 or 3, got {}", self.n_phases)));
        }
        for (name, v) in [
            ("kappa_prior_mean", self.kappa_prior_mean),
            ("eta_prior_mean", self.eta_prior_mean),
            ("kappa_step", self.kappa_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(k) = &self.kappa_init {
            if k.len() != self.n_phases - 1 {
                return Err(Error::Config(format!(
                    "kappa_init needs {} values, got {}",
                    self.n_phases - 1,
                    k.len()
                )));
            }
        }
        if !self.growth.is_bounded() {
            return Err(Error::Config(format!("{:?} is not supported in multiphase fits", self.growth)));
        }
        self.prior.validate()
    }
}

/// The cases-only multiphase posterior as a [`Model`].
///
/// Parameters: `r_1, a_1, K_1`, then per later phase `p`: `r_p, a_p,
/// eta_{p-1}, kappa_{p-1}`, then the error hyperparameter.
#[derive(Debug, Clone)]
pub struct MultiphaseModel {
    config: MultiphaseConfig,
    k_prior: LognormalPrior,
    hyper: GammaPrior,
    params: Vec<ParamInfo>,
    outcomes: Vec<OutcomeData>,
    cum: Vec<f64>,
    daily: Vec<f64>,
    t_max: usize,
}

impl MultiphaseModel {
    pub fn new(series: &EpidemicSeries, t_max: usize, config: &MultiphaseConfig) -> Result<Self> {
        config.validate()?;
        if t_max < 3 || t_max > series.len() {
            return Err(Error::Config(format!(
                "training end must lie in 3..={} (got {t_max})",
                series.len()
            )));
        }
        let cum: Vec<f64> = series.cum_cases()[..t_max].iter().map(|&c| c as f64).collect();
        let joint = config.prior.resolve(&cum, t_max)?;
        let shape = if config.growth == Family::Richards { Transform::Log } else { Transform::Fixed };
        let mut params = vec![
            ParamInfo::new("r_1", Transform::Log).in_mean(&[0]),
            ParamInfo::new("a_1", shape).in_mean(&[0]),
            ParamInfo::new("K_1", Transform::Log).in_mean(&[0]),
        ];
        for p in 2..=config.n_phases {
            params.push(ParamInfo::new(&format!("r_{p}"), Transform::Log).in_mean(&[0]));
            params.push(ParamInfo::new(&format!("a_{p}"), shape).in_mean(&[0]));
            params.push(ParamInfo::new(&format!("eta_{}", p - 1), Transform::Log).in_mean(&[0]));
            params.push(
                ParamInfo::new(&format!("kappa_{}", p - 1), Transform::Reflect { lower: 1.0 })
                    .in_mean(&[0])
                    .scale(config.kappa_step),
            );
        }
        let hyper_name = match config.error {
            ErrorFamily::Pg => "lambda",
            ErrorFamily::Pln | ErrorFamily::Pls => "prec",
        };
        params.push(ParamInfo::new(hyper_name, Transform::Log).in_error(&[0]).scale(0.3));
        let outcomes = vec![OutcomeData::from_daily("cases", series.cases(), series.cum_cases(), 2, t_max)];
        Ok(Self {
            config: config.clone(),
            k_prior: joint.k,
            hyper: joint.hyper,
            params,
            outcomes,
            cum,
            daily: series.cases()[..t_max].iter().map(|&c| c as f64).collect(),
            t_max,
        })
    }

    pub fn config(&self) -> &MultiphaseConfig {
        &self.config
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    fn hyper_index(&self) -> usize {
        self.params.len() - 1
    }

    /// Phase plan of a natural-scale parameter vector, without validation.
    pub fn plan(&self, theta: &[f64]) -> PhasePlan {
        let family = self.config.growth;
        let mut k = theta[2];
        let mut phases = vec![GrowthParams { family, r: theta[0], k, a: theta[1] }];
        let mut switches = Vec::new();
        for p in 1..self.config.n_phases {
            let base = 3 + 4 * (p - 1);
            k *= theta[base + 2];
            phases.push(GrowthParams { family, r: theta[base], k, a: theta[base + 1] });
            switches.push(theta[base + 3]);
        }
        PhasePlan { phases, switches }
    }

    /// Switch-point guesses: the trough of the smoothed daily counts for two
    /// phases, evenly spaced days for three.
    fn default_kappas(&self) -> Vec<f64> {
        let t = self.t_max as f64;
        if self.config.n_phases == 3 {
            return vec![t / 3.0, 2.0 * t / 3.0];
        }
        let smooth = moving_average(&self.daily, 7).unwrap_or_else(|_| self.daily.clone());
        let lo = self.t_max / 3;
        let hi = self.t_max.saturating_sub(3).max(lo + 1);
        let trough = (lo..hi)
            .min_by(|&i, &j| smooth[i].total_cmp(&smooth[j]))
            .unwrap_or(self.t_max / 2);
        vec![(trough + 1) as f64]
    }
}

impl Model for MultiphaseModel {
    fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    fn outcomes(&self) -> &[OutcomeData] {
        &self.outcomes
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let rate_mean = self.config.prior.rate_prior_mean;
        let shaped = self.config.growth == Family::Richards;
        let mut lp = ln_exponential_pdf(theta[0], rate_mean) + self.k_prior.ln_pdf(theta[2]);
        if shaped {
            lp += ln_exponential_pdf(theta[1], rate_mean);
        }
        let mut prev_kappa = f64::NEG_INFINITY;
        for p in 1..self.config.n_phases {
            let base = 3 + 4 * (p - 1);
            let (r, a, eta, kappa) = (theta[base], theta[base + 1], theta[base + 2], theta[base + 3]);
            if !(r > 0.0 && eta > 0.0 && kappa >= 1.0 && kappa > prev_kappa) {
                return f64::NEG_INFINITY;
            }
            prev_kappa = kappa;
            lp += ln_exponential_pdf(r, rate_mean)
                + ln_exponential_pdf(eta, self.config.eta_prior_mean)
                + ln_exponential_pdf(kappa, self.config.kappa_prior_mean);
            if shaped {
                lp += ln_exponential_pdf(a, rate_mean);
            }
        }
        let h = theta[self.hyper_index()];
        if !(theta[0] > 0.0 && theta[2] > 0.0 && h > 0.0) {
            return f64::NEG_INFINITY;
        }
        lp + self.hyper.ln_pdf(h)
    }

    fn mean_det(&self, theta: &[f64], _o: usize, out: &mut [f64]) -> bool {
        let plan = self.plan(theta);
        let data = &self.outcomes[0];
        for ((m, &c), &t) in out.iter_mut().zip(&data.prev_cum).zip(&data.days) {
            *m = plan.rate(c, t as f64);
            if !(*m > 0.0) || !m.is_finite() {
                return false;
            }
        }
        true
    }

    fn error_spec(&self, theta: &[f64], _o: usize) -> ErrorSpec {
        self.config.error.spec(theta[self.hyper_index()], self.config.prior.nu)
    }

    fn initial_theta(&self, _chain: usize, attempt: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let spread = 0.1 * (1.0 + attempt as f64 / 10.0);
        let mut jitter = || 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0);
        let c_max = self.cum[self.t_max - 1];
        let kappas = self.config.kappa_init.clone().unwrap_or_else(|| self.default_kappas());
        // K_1 must exceed the cumulative count just before the first switch.
        let first_switch_day = (kappas[0].ceil() as usize).clamp(2, self.t_max);
        let c_switch = self.cum[first_switch_day - 2];
        let k_e = self.k_prior.median();
        let k1 = if k_e > 1.5 * c_switch { k_e } else { 2.0 * c_switch }.max(1.0) * jitter();
        let mean = self.config.prior.rate_prior_mean;
        let mut theta = vec![0.1 * mean * jitter(), mean * jitter(), k1];
        let mut k = k1;
        for (p, &kappa) in kappas.iter().enumerate() {
            let eta = if k > 1.5 * c_max { 1.0 } else { 2.0 * c_max / k } * jitter().max(1.0);
            k *= eta;
            let step = (jitter() - 1.0) / spread * attempt as f64;
            theta.extend([0.1 * mean * jitter(), mean * jitter(), eta, (kappa + step).max(1.0 + p as f64)]);
        }
        theta.push(10.0 * jitter());
        theta
    }

    fn predictive_mean(&self, theta: &[f64], _o: usize, t: usize, c_prev: f64) -> f64 {
        self.plan(theta).rate(c_prev, t as f64)
    }

    fn observed_cumulative(&self, _o: usize) -> &[f64] {
        &self.cum
    }

    fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![vec![0, 1, 2]];
        for p in 1..self.config.n_phases {
            let base = 3 + 4 * (p - 1);
            blocks.push(vec![base, base + 1, base + 2]);
        }
        blocks
    }

    fn derived_names(&self) -> Vec<String> {
        (2..=self.config.n_phases).map(|p| format!("K_{p}")).collect()
    }

    fn derived(&self, theta: &[f64]) -> Vec<f64> {
        self.plan(theta).phases[1..].iter().map(|g| g.k).collect()
    }
}

/// Fits the multiphase model to the first `t_max` days of cases.
pub fn fit_multiphase(
    series: &EpidemicSeries,
    t_max: usize,
    config: &MultiphaseConfig,
    sampler: &SamplerConfig,
) -> Result<(MultiphaseModel, PosteriorDraws)> {
    let model = MultiphaseModel::new(series, t_max, config)?;
    let draws = run_chains(&model, sampler)?;
    Ok((model, draws))
}

/// Posterior means of one outcome's fitted curve on its likelihood days.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCurve {
    pub days: Vec<usize>,
    /// Mean of the deterministic growth mean.
    pub mu_det: Vec<f64>,
    /// Mean of the Poisson rate, growth mean times the latent effect.
    pub mu: Vec<f64>,
}

impl FittedCurve {
    pub fn from_draws(draws: &PosteriorDraws, o: usize) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Argument("no posterior draws".into()));
        }
        let days = draws.outcome_days[o].clone();
        let n = draws.len() as f64;
        let mut mu_det = vec![0.0; days.len()];
        let mut mu = vec![0.0; days.len()];
        for d in &draws.draws {
            for i in 0..days.len() {
                mu_det[i] += d.mu_det[o][i] / n;
                mu[i] += d.mu_det[o][i] * d.eps[o][i] / n;
            }
        }
        Ok(Self { days, mu_det, mu })
    }

    /// CSV with columns `day,date,observed,mu_det_mean,mu_mean`.
    pub fn to_csv(&self, series: &EpidemicSeries, observed: &[u64]) -> String {
        let mut out = String::from("day,date,observed,mu_det_mean,mu_mean\n");
        for (i, &t) in self.days.iter().enumerate() {
            out.push_str(&format!(
                "{t},{},{},{},{}\n",
                series.date(t),
                observed[t - 1],
                self.mu_det[i],
                self.mu[i]
            ));
        }
        out
    }
}
