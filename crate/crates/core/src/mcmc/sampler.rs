//! Adaptive Metropolis-within-Gibbs over growth parameters and per-day
//! latent effects.
//!
//! Every scalar parameter gets two single-site random-walk moves per sweep:
//!
//! * a *centred* move that keeps the latent effects `u_t` fixed, and
//! * for parameters that enter a Poisson mean, a *non-centred* move that
//!   keeps the Poisson rates `mu_det_t * exp(u_t)` fixed and shifts the
//!   latents by `log mu_det_t - log mu_det'_t`.
//!
//! The non-centred map is a shift in `(z, u)` with unit Jacobian, so both
//! moves are plain symmetric Metropolis steps. Alternating them keeps the
//! growth parameters mixing when the counts are large and the latents are
//! pinned by the data.
//!
//! Latents are updated one day at a time: conjugate Gibbs for the gamma
//! family, adaptive random walk on `u_t` otherwise, followed by a Gibbs draw
//! of the Student mixture scale for the log-Student family. Proposal scales
//! adapt during burn-in only.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::errmodel::{
    gamma_draw, ln_factorial, log_latent_density, poisson_lpmf_with, update_student_mix_scale, ErrorSpec,
};
use crate::error::{Error, Result};

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    /// Defaults to `n_iter / 2`.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub target_accept: f64,
    pub adapt_window: usize,
    pub rhat_threshold: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 2,
            n_iter: 100_000,
            burn_in: None,
            thin: 10,
            target_accept: 0.44,
            adapt_window: 50,
            rhat_threshold: 1.05,
            seed: 20200808,
        }
    }
}

impl SamplerConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_iter / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be positive".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be positive".into()));
        }
        if self.burn_in() >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in(),
                self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.adapt_window == 0 {
            return Err(Error::Config("adapt_window must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// How a scalar parameter is mapped to the sampler's unconstrained scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// Positive parameter sampled as `log x`.
    Log,
    /// Parameter in (0, 1) sampled as `logit x`.
    Logit,
    /// Raw scale, random-walk proposals reflected at `lower`.
    Reflect { lower: f64 },
    /// Held at its initial value.
    Fixed,
}

impl Transform {
    fn to_natural(self, z: f64) -> f64 {
        match self {
            Transform::Log => z.exp(),
            Transform::Logit => 1.0 / (1.0 + (-z).exp()),
            Transform::Reflect { .. } | Transform::Fixed => z,
        }
    }

    fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.ln(),
            Transform::Logit => (x / (1.0 - x)).ln(),
            Transform::Reflect { .. } | Transform::Fixed => x,
        }
    }

    /// `log |dx/dz|`.
    fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.ln(),
            Transform::Logit => x.ln() + (-x).ln_1p(),
            Transform::Reflect { .. } | Transform::Fixed => 0.0,
        }
    }

    fn propose(self, z: f64, step: f64) -> f64 {
        match self {
            Transform::Reflect { lower } => {
                let p = z + step;
                if p < lower {
                    2.0 * lower - p
                } else {
                    p
                }
            }
            _ => z + step,
        }
    }
}

/// Static description of one sampled scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub transform: Transform,
    /// Outcomes whose deterministic mean depends on this parameter.
    pub mean_outcomes: Vec<usize>,
    /// Outcomes whose latent-effect density depends on this parameter.
    pub error_outcomes: Vec<usize>,
    /// Initial proposal standard deviation on the unconstrained scale.
    pub initial_scale: f64,
}

impl ParamInfo {
    pub fn new(name: &str, transform: Transform) -> Self {
        Self {
            name: name.to_string(),
            transform,
            mean_outcomes: Vec::new(),
            error_outcomes: Vec::new(),
            initial_scale: 0.1,
        }
    }

    pub fn in_mean(mut self, outcomes: &[usize]) -> Self {
        self.mean_outcomes = outcomes.to_vec();
        self
    }

    pub fn in_error(mut self, outcomes: &[usize]) -> Self {
        self.error_outcomes = outcomes.to_vec();
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.initial_scale = s;
        self
    }
}

/// Observed counts of one outcome over its likelihood window.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeData {
    pub name: String,
    /// Day index `t` (1-based) of every likelihood term.
    pub days: Vec<usize>,
    pub counts: Vec<u64>,
    /// Observed cumulative count on the previous day, `C_{t-1}`.
    pub prev_cum: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl OutcomeData {
    /// Likelihood terms for days `first_day..=t_max` of a daily count series.
    pub fn from_daily(name: &str, daily: &[u64], cum: &[u64], first_day: usize, t_max: usize) -> Self {
        let days: Vec<usize> = (first_day..=t_max).collect();
        let counts: Vec<u64> = days.iter().map(|&t| daily[t - 1]).collect();
        let prev_cum = days.iter().map(|&t| cum[t - 2] as f64).collect();
        let ln_fact = counts.iter().map(|&y| ln_factorial(y)).collect();
        Self { name: name.to_string(), days, counts, prev_cum, ln_fact }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn ln_factorials(&self) -> &[f64] {
        &self.ln_fact
    }
}

/// A posterior over natural-scale parameters and per-day latent effects.
pub trait Model: Sync {
    fn params(&self) -> &[ParamInfo];

    fn outcomes(&self) -> &[OutcomeData];

    /// Log prior on the natural scale; `-inf` outside the support.
    fn log_prior(&self, theta: &[f64]) -> f64;

    /// Fills the deterministic Poisson means of outcome `o`. Returns false
    /// when any mean is non-positive (support violation).
    fn mean_det(&self, theta: &[f64], o: usize, out: &mut [f64]) -> bool;

    fn error_spec(&self, theta: &[f64], o: usize) -> ErrorSpec;

    /// Starting point for `chain`; `attempt` counts rejected starts.
    fn initial_theta(&self, chain: usize, attempt: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Deterministic mean of outcome `o` on day `t` given the previous
    /// day's cumulative count, for forward simulation. Non-positive values
    /// mean the curve has saturated.
    fn predictive_mean(&self, theta: &[f64], o: usize, t: usize, c_prev: f64) -> f64;

    /// Observed cumulative counts of outcome `o`, day 1 through the training end.
    fn observed_cumulative(&self, o: usize) -> &[f64];

    /// Groups of strongly correlated parameters that also get joint moves
    /// with a covariance learned during burn-in.
    fn blocks(&self) -> Vec<Vec<usize>> {
        Vec::new()
    }

    fn derived_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn derived(&self, _theta: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

/// One retained state.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    /// Iteration index within the chain (0-based, includes burn-in).
    pub iter: usize,
    /// Natural-scale parameters followed by derived quantities.
    pub values: Vec<f64>,
    /// Per outcome: deterministic means on the likelihood days.
    pub mu_det: Vec<Vec<f64>>,
    /// Per outcome: multiplicative effects on the likelihood days.
    pub eps: Vec<Vec<f64>>,
    /// Per outcome: pointwise conditional log-likelihood.
    pub loglik: Vec<Vec<f64>>,
    pub log_post: f64,
}

/// Adaptation and acceptance bookkeeping for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    /// Centred-move scales at the end of burn-in.
    pub scales_at_burn_in: Vec<f64>,
    /// Centred-move scales at the end of the run.
    pub scales_final: Vec<f64>,
    /// Post-burn-in acceptance rate of each parameter's centred move.
    pub acceptance: Vec<f64>,
}

/// Retained states of all chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_params: usize,
    pub outcome_names: Vec<String>,
    pub outcome_days: Vec<Vec<usize>>,
    pub n_chains: usize,
    pub draws: Vec<Draw>,
    pub stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All retained values of `name`, chains concatenated.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index_of(name)?;
        Some(self.draws.iter().map(|d| d.values[i]).collect())
    }

    /// Values of `name` split by chain.
    pub fn chains_of(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        let i = self.index_of(name)?;
        let mut out = vec![Vec::new(); self.n_chains];
        for d in &self.draws {
            out[d.chain].push(d.values[i]);
        }
        Some(out)
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Columnar CSV: `chain,iter,<names...>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chain,iter");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for d in &self.draws {
            out.push_str(&format!("{},{}", d.chain, d.iter));
            for v in &d.values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

struct OutcomeState {
    spec: ErrorSpec,
    u: Vec<f64>,
    mix: Vec<f64>,
    mu: Vec<f64>,
    ln_mu: Vec<f64>,
    ll: Vec<f64>,
    lat: Vec<f64>,
    scales: Vec<f64>,
    accepts: Vec<u32>,
}

impl OutcomeState {
    fn ll_at(data: &OutcomeData, i: usize, ln_rate: f64) -> f64 {
        poisson_lpmf_with(data.counts[i], ln_rate.exp(), data.ln_fact[i])
    }

    fn sum_ll(&self) -> f64 {
        self.ll.iter().sum()
    }

    fn sum_lat(&self) -> f64 {
        self.lat.iter().sum()
    }
}

struct Adaptive {
    log_scale: f64,
    accepted: u32,
    tried: u32,
    batches: u32,
    post_accepted: u64,
    post_tried: u64,
}

impl Adaptive {
    fn new(scale: f64) -> Self {
        Self { log_scale: scale.ln(), accepted: 0, tried: 0, batches: 0, post_accepted: 0, post_tried: 0 }
    }

    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    fn record(&mut self, accepted: bool, adapting: bool) {
        if adapting {
            self.tried += 1;
            self.accepted += accepted as u32;
        } else {
            self.post_tried += 1;
            self.post_accepted += accepted as u64;
        }
    }

    fn adapt(&mut self, target: f64) {
        if self.tried == 0 {
            return;
        }
        self.batches += 1;
        let delta = (1.0 / f64::from(self.batches).sqrt()).min(0.5);
        let rate = f64::from(self.accepted) / f64::from(self.tried);
        self.log_scale += if rate > target { delta } else { -delta };
        self.log_scale = self.log_scale.clamp(-12.0, 4.0);
        self.accepted = 0;
        self.tried = 0;
    }

    fn acceptance(&self) -> f64 {
        if self.post_tried == 0 {
            f64::NAN
        } else {
            self.post_accepted as f64 / self.post_tried as f64
        }
    }
}

/// Acceptance target of the joint block moves.
const BLOCK_TARGET_ACCEPT: f64 = 0.234;

/// Lower-triangular `L` with `L L^T = a`, or `None` if `a` is not positive definite.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Joint random-walk proposals for one parameter block, shaped by the
/// running covariance of the block during burn-in.
struct BlockAdaptive {
    idx: Vec<usize>,
    n: f64,
    mean: Vec<f64>,
    comoment: Vec<Vec<f64>>,
    chol: Option<Vec<Vec<f64>>>,
    centred: Adaptive,
    non_centred: Adaptive,
}

impl BlockAdaptive {
    fn new(idx: Vec<usize>) -> Self {
        let d = idx.len();
        Self {
            n: 0.0,
            mean: vec![0.0; d],
            comoment: vec![vec![0.0; d]; d],
            chol: None,
            centred: Adaptive::new(1.0),
            non_centred: Adaptive::new(1.0),
            idx,
        }
    }

    fn reset_moments(&mut self) {
        let d = self.idx.len();
        self.n = 0.0;
        self.mean = vec![0.0; d];
        self.comoment = vec![vec![0.0; d]; d];
    }

    fn observe(&mut self, z: &[f64]) {
        self.n += 1.0;
        let x: Vec<f64> = self.idx.iter().map(|&j| z[j]).collect();
        let dx: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&dx) {
            *m += d / self.n;
        }
        for i in 0..x.len() {
            for j in 0..x.len() {
                self.comoment[i][j] += dx[i] * (x[j] - self.mean[j]);
            }
        }
    }

    /// Refreshes the proposal factor from the current moments.
    fn refresh(&mut self) {
        let d = self.idx.len();
        if self.n < (10 * d).max(20) as f64 {
            return;
        }
        let factor = 2.38 * 2.38 / d as f64 / (self.n - 1.0);
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| factor * self.comoment[i][j] + if i == j { 1e-10 } else { 0.0 }).collect())
            .collect();
        if let Some(l) = cholesky(&cov) {
            self.chol = Some(l);
        }
    }

    fn steps(&self, scale: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let l = self.chol.as_ref()?;
        let z: Vec<f64> = (0..l.len()).map(|_| StandardNormal.sample(rng)).collect();
        Some((0..l.len()).map(|i| scale * (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>()).collect())
    }
}

fn adapt_latent(scale: &mut f64, accepts: &mut u32, window: usize, batch: u32, target: f64) {
    let rate = f64::from(*accepts) / window as f64;
    let delta = (1.0 / f64::from(batch).sqrt()).min(0.5);
    let log_s = scale.ln() + if rate > target { delta } else { -delta };
    *scale = log_s.clamp(-12.0, 4.0).exp();
    *accepts = 0;
}

struct ChainState<'m, M: Model> {
    model: &'m M,
    z: Vec<f64>,
    theta: Vec<f64>,
    lp_prior: f64,
    outcomes: Vec<OutcomeState>,
}

impl<'m, M: Model> ChainState<'m, M> {
    fn new(model: &'m M, theta: Vec<f64>) -> Option<Self> {
        let params = model.params();
        let z: Vec<f64> = params.iter().zip(&theta).map(|(p, &x)| p.transform.to_unconstrained(x)).collect();
        let lp_prior = Self::prior_with_jacobian(model, &theta);
        if !lp_prior.is_finite() {
            return None;
        }
        let mut outcomes = Vec::new();
        for (o, data) in model.outcomes().iter().enumerate() {
            let n = data.len();
            let spec = model.error_spec(&theta, o);
            let mut mu = vec![0.0; n];
            if !model.mean_det(&theta, o, &mut mu) {
                return None;
            }
            let ln_mu: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
            let u = vec![0.0; n];
            let mix = vec![1.0; n];
            let ll: Vec<f64> = (0..n).map(|i| OutcomeState::ll_at(data, i, ln_mu[i])).collect();
            let lat: Vec<f64> = (0..n).map(|i| log_latent_density(&spec, u[i], mix[i])).collect();
            let scales = data.counts.iter().map(|&y| 1.0 / (y as f64 + 1.0).sqrt()).collect();
            outcomes.push(OutcomeState { spec, u, mix, mu, ln_mu, ll, lat, scales, accepts: vec![0; n] });
        }
        let state = Self { model, z, theta, lp_prior, outcomes };
        state.log_post().is_finite().then_some(state)
    }

    fn prior_with_jacobian(model: &M, theta: &[f64]) -> f64 {
        let lp = model.log_prior(theta);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp + model
            .params()
            .iter()
            .zip(theta)
            .map(|(p, &x)| p.transform.log_jacobian(x))
            .sum::<f64>()
    }

    fn log_post(&self) -> f64 {
        self.lp_prior + self.outcomes.iter().map(|s| s.sum_ll() + s.sum_lat()).sum::<f64>()
    }

    /// Metropolis move of the parameters `idx` by `steps` on the
    /// unconstrained scale. The centred form keeps the latents fixed; the
    /// non-centred form keeps the Poisson rates fixed and shifts the latents.
    fn block_update(&mut self, idx: &[usize], steps: &[f64], non_centred: bool, rng: &mut ChaCha8Rng) -> bool {
        let params = self.model.params();
        let mut z = self.z.clone();
        let mut theta = self.theta.clone();
        for (&j, &step) in idx.iter().zip(steps) {
            let t = params[j].transform;
            z[j] = t.propose(z[j], step);
            theta[j] = t.to_natural(z[j]);
            if !theta[j].is_finite() {
                return false;
            }
        }
        let lp_prior = Self::prior_with_jacobian(self.model, &theta);
        if !lp_prior.is_finite() {
            return false;
        }
        let n_out = self.outcomes.len();
        let mut in_mean = vec![false; n_out];
        let mut in_error = vec![false; n_out];
        for &j in idx {
            for &o in &params[j].mean_outcomes {
                in_mean[o] = true;
            }
            for &o in &params[j].error_outcomes {
                in_error[o] = true;
            }
        }
        let mut delta = lp_prior - self.lp_prior;
        let mut updates: Vec<(usize, OutcomeState)> = Vec::new();
        for o in 0..n_out {
            if !in_mean[o] && !in_error[o] {
                continue;
            }
            let data = &self.model.outcomes()[o];
            let old = &self.outcomes[o];
            let spec = if in_error[o] { self.model.error_spec(&theta, o) } else { old.spec };
            let (mu, ln_mu) = if in_mean[o] {
                let mut mu = vec![0.0; data.len()];
                if !self.model.mean_det(&theta, o, &mut mu) {
                    return false;
                }
                let ln_mu: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
                (mu, ln_mu)
            } else {
                (old.mu.clone(), old.ln_mu.clone())
            };
            let (u, ll) = if in_mean[o] && non_centred {
                let u: Vec<f64> = (0..data.len()).map(|i| old.u[i] + old.ln_mu[i] - ln_mu[i]).collect();
                (u, old.ll.clone())
            } else if in_mean[o] {
                let ll: Vec<f64> =
                    (0..data.len()).map(|i| OutcomeState::ll_at(data, i, ln_mu[i] + old.u[i])).collect();
                delta += ll.iter().sum::<f64>() - old.sum_ll();
                (old.u.clone(), ll)
            } else {
                (old.u.clone(), old.ll.clone())
            };
            let lat: Vec<f64> = if in_error[o] || (in_mean[o] && non_centred) {
                let lat: Vec<f64> = u.iter().zip(&old.mix).map(|(&u, &w)| log_latent_density(&spec, u, w)).collect();
                delta += lat.iter().sum::<f64>() - old.sum_lat();
                lat
            } else {
                old.lat.clone()
            };
            updates.push((
                o,
                OutcomeState {
                    spec,
                    u,
                    mix: Vec::new(),
                    mu,
                    ln_mu,
                    ll,
                    lat,
                    scales: Vec::new(),
                    accepts: Vec::new(),
                },
            ));
        }
        if !(delta.is_finite() && rng.random::<f64>().ln() < delta) {
            return false;
        }
        self.z = z;
        self.theta = theta;
        self.lp_prior = lp_prior;
        for (o, new) in updates {
            let s = &mut self.outcomes[o];
            s.spec = new.spec;
            s.u = new.u;
            s.mu = new.mu;
            s.ln_mu = new.ln_mu;
            s.ll = new.ll;
            s.lat = new.lat;
        }
        true
    }

    fn latent_sweep(&mut self, rng: &mut ChaCha8Rng) {
        for (o, data) in self.model.outcomes().iter().enumerate() {
            let s = &mut self.outcomes[o];
            for i in 0..data.len() {
                match s.spec {
                    ErrorSpec::PoissonGamma { lambda } => {
                        let eps = gamma_draw(lambda + data.counts[i] as f64, lambda + s.mu[i], rng);
                        // Guard against underflow of tiny gamma draws.
                        let u = eps.max(f64::MIN_POSITIVE).ln();
                        s.u[i] = u;
                        s.ll[i] = OutcomeState::ll_at(data, i, s.ln_mu[i] + u);
                        s.lat[i] = log_latent_density(&s.spec, u, 1.0);
                    }
                    ErrorSpec::PoissonLognormal { .. } | ErrorSpec::PoissonLogStudent { .. } => {
                        let z: f64 = StandardNormal.sample(rng);
                        let u = s.u[i] + s.scales[i] * z;
                        let ll = OutcomeState::ll_at(data, i, s.ln_mu[i] + u);
                        let lat = log_latent_density(&s.spec, u, s.mix[i]);
                        let delta = ll + lat - s.ll[i] - s.lat[i];
                        if delta.is_finite() && rng.random::<f64>().ln() < delta {
                            s.u[i] = u;
                            s.ll[i] = ll;
                            s.lat[i] = lat;
                            s.accepts[i] += 1;
                        }
                        if let ErrorSpec::PoissonLogStudent { sigma, nu } = s.spec {
                            s.mix[i] = update_student_mix_scale(s.u[i], sigma, nu, rng).max(f64::MIN_POSITIVE);
                            s.lat[i] = log_latent_density(&s.spec, s.u[i], s.mix[i]);
                        }
                    }
                }
            }
        }
    }

    fn snapshot(&self, chain: usize, iter: usize) -> Draw {
        let mut values = self.theta.clone();
        values.extend(self.model.derived(&self.theta));
        Draw {
            chain,
            iter,
            values,
            mu_det: self.outcomes.iter().map(|s| s.mu.clone()).collect(),
            eps: self.outcomes.iter().map(|s| s.u.iter().map(|u| u.exp()).collect()).collect(),
            loglik: self.outcomes.iter().map(|s| s.ll.clone()).collect(),
            log_post: self.log_post(),
        }
    }
}

/// Random source for `chain` derived from the run seed.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

const MAX_INIT_ATTEMPTS: usize = 100;

fn run_chain<M: Model>(model: &M, cfg: &SamplerConfig, chain: usize) -> Result<(Vec<Draw>, ChainStats)> {
    let mut rng = chain_rng(cfg.seed, chain);
    let mut state = None;
    for attempt in 0..MAX_INIT_ATTEMPTS {
        let theta = model.initial_theta(chain, attempt, &mut rng);
        if let Some(s) = ChainState::new(model, theta) {
            state = Some(s);
            break;
        }
    }
    let mut state = state.ok_or_else(|| {
        Error::Initialization(format!(
            "chain {chain}: all {MAX_INIT_ATTEMPTS} starting points have zero posterior density \
             (check that final-size priors exceed the observed cumulative counts)"
        ))
    })?;

    let params = model.params();
    let mut centred: Vec<Adaptive> = params.iter().map(|p| Adaptive::new(p.initial_scale)).collect();
    let mut non_centred: Vec<Adaptive> = params.iter().map(|p| Adaptive::new(p.initial_scale)).collect();
    let mut blocks: Vec<BlockAdaptive> = model
        .blocks()
        .into_iter()
        .map(|b| b.into_iter().filter(|&j| params[j].transform != Transform::Fixed).collect::<Vec<_>>())
        .filter(|b| b.len() > 1)
        .map(BlockAdaptive::new)
        .collect();
    let burn_in = cfg.burn_in();
    let mut latent_batches = 0u32;
    let mut scales_at_burn_in = Vec::new();
    let mut draws = Vec::with_capacity((cfg.n_iter - burn_in) / cfg.thin + 1);

    for iter in 0..cfg.n_iter {
        let adapting = iter < burn_in;
        for (j, info) in params.iter().enumerate() {
            if info.transform == Transform::Fixed {
                continue;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            let ok = state.block_update(&[j], &[centred[j].scale() * z], false, &mut rng);
            centred[j].record(ok, adapting);
            if !info.mean_outcomes.is_empty() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let ok = state.block_update(&[j], &[non_centred[j].scale() * z], true, &mut rng);
                non_centred[j].record(ok, adapting);
            }
        }
        for b in &mut blocks {
            if let Some(steps) = b.steps(b.centred.scale(), &mut rng) {
                let ok = state.block_update(&b.idx, &steps, false, &mut rng);
                b.centred.record(ok, adapting);
            }
            if let Some(steps) = b.steps(b.non_centred.scale(), &mut rng) {
                let ok = state.block_update(&b.idx, &steps, true, &mut rng);
                b.non_centred.record(ok, adapting);
            }
        }
        state.latent_sweep(&mut rng);

        if adapting {
            if iter == burn_in / 4 {
                // Drop the initial transient from the block covariances.
                blocks.iter_mut().for_each(BlockAdaptive::reset_moments);
            }
            for b in &mut blocks {
                b.observe(&state.z);
            }
        }
        if adapting && (iter + 1) % cfg.adapt_window == 0 {
            for a in centred.iter_mut().chain(non_centred.iter_mut()) {
                a.adapt(cfg.target_accept);
            }
            for b in &mut blocks {
                b.centred.adapt(BLOCK_TARGET_ACCEPT);
                b.non_centred.adapt(BLOCK_TARGET_ACCEPT);
                b.refresh();
            }
            latent_batches += 1;
            for s in &mut state.outcomes {
                if matches!(s.spec, ErrorSpec::PoissonGamma { .. }) {
                    continue;
                }
                for (scale, acc) in s.scales.iter_mut().zip(s.accepts.iter_mut()) {
                    adapt_latent(scale, acc, cfg.adapt_window, latent_batches, cfg.target_accept);
                }
            }
        }
        if iter + 1 == burn_in {
            scales_at_burn_in = centred.iter().map(Adaptive::scale).collect();
        }
        if !adapting && (iter - burn_in).is_multiple_of(cfg.thin) {
            draws.push(state.snapshot(chain, iter));
        }
    }
    if scales_at_burn_in.is_empty() {
        scales_at_burn_in = centred.iter().map(Adaptive::scale).collect();
    }
    let stats = ChainStats {
        scales_at_burn_in,
        scales_final: centred.iter().map(Adaptive::scale).collect(),
        acceptance: centred.iter().map(Adaptive::acceptance).collect(),
    };
    Ok((draws, stats))
}

/// Runs `cfg.n_chains` independent chains, in parallel where threads are
/// available, and pools the retained draws (ordered by chain, then iteration).
pub fn run_chains<M: Model>(model: &M, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if model.outcomes().iter().all(OutcomeData::is_empty) {
        return Err(Error::Data("no likelihood terms: the training window is too short".into()));
    }
    let results: Vec<Result<(Vec<Draw>, ChainStats)>> = if cfg!(target_arch = "wasm32") {
        (0..cfg.n_chains).map(|chain| run_chain(model, cfg, chain)).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..cfg.n_chains)
                .map(|chain| scope.spawn(move || run_chain(model, cfg, chain)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
        })
    };
    let mut draws = Vec::new();
    let mut stats = Vec::new();
    for r in results {
        let (d, s) = r?;
        draws.extend(d);
        stats.push(s);
    }
    let mut names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
    names.extend(model.derived_names());
    Ok(PosteriorDraws {
        names,
        n_params: model.params().len(),
        outcome_names: model.outcomes().iter().map(|o| o.name.clone()).collect(),
        outcome_days: model.outcomes().iter().map(|o| o.days.clone()).collect(),
        n_chains: cfg.n_chains,
        draws,
        stats,
    })
}
