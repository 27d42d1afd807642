//! Serial-interval densities and effective reproduction ratios.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::data::EpidemicSeries;
use crate::error::{Error, Result};
use crate::mcmc::{quantiles, PosteriorDraws};

/// Default maximum lag of the discretized serial interval.
pub const DEFAULT_MAX_LAG: usize = 16;
pub const DEFAULT_SI_MEAN: f64 = 3.5;
pub const DEFAULT_SI_SD: f64 = 3.1;

/// Gamma serial-interval density (rate per day).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSI {
    pub shape: f64,
    pub rate: f64,
}

impl GammaSI {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::Argument(format!("gamma needs positive shape and rate (got {shape}, {rate})")));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() / self.rate
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_lr(self.shape, self.rate * x)
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        standard_gamma_quantile(self.shape, p) / self.rate
    }
}

impl Default for GammaSI {
    fn default() -> Self {
        gamma_from_mean_sd(DEFAULT_SI_MEAN, DEFAULT_SI_SD).expect("valid default")
    }
}

/// Quantile of `Gamma(shape, 1)` by bisection on `log x`; zero when it
/// underflows.
fn standard_gamma_quantile(shape: f64, p: f64) -> f64 {
    let mut hi = shape.max(1.0).ln();
    while gamma_lr(shape, hi.exp()) < p {
        hi += std::f64::consts::LN_2;
    }
    let mut lo = f64::MIN_POSITIVE.ln();
    if gamma_lr(shape, lo.exp()) >= p {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_lr(shape, mid.exp()) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Moment-matched gamma: `shape = (mean/sd)^2`, `rate = mean/sd^2`.
pub fn gamma_from_mean_sd(mean: f64, sd: f64) -> Result<GammaSI> {
    if !(mean > 0.0 && sd > 0.0 && mean.is_finite() && sd.is_finite()) {
        return Err(Error::Argument(format!("mean and sd must be positive (got {mean}, {sd})")));
    }
    GammaSI::new((mean / sd).powi(2), mean / (sd * sd))
}

/// Gamma whose quantiles at `q1.0 < q2.0` equal `q1.1 < q2.1` days.
pub fn gamma_from_quantiles(q1: (f64, f64), q2: (f64, f64)) -> Result<GammaSI> {
    let ((p1, v1), (p2, v2)) = (q1, q2);
    if !(0.0 < p1 && p1 < p2 && p2 < 1.0) {
        return Err(Error::Argument(format!("need 0 < p1 < p2 < 1 (got {p1}, {p2})")));
    }
    if !(0.0 < v1 && v1 < v2 && v2.is_finite()) {
        return Err(Error::Argument(format!("need 0 < value1 < value2 (got {v1}, {v2})")));
    }
    let target = (v2 / v1).ln();
    // The quantile ratio falls from infinity to 1 as the shape grows.
    let log_ratio = |shape: f64| {
        let lower = standard_gamma_quantile(shape, p1);
        if lower > 0.0 {
            (standard_gamma_quantile(shape, p2) / lower).ln()
        } else {
            f64::INFINITY
        }
    };
    let (mut lo, mut hi) = (1e-4f64.ln(), 1e4f64.ln());
    if !(log_ratio(lo.exp()) >= target && log_ratio(hi.exp()) <= target) {
        return Err(Error::Solver(format!(
            "no gamma shape in [1e-4, 1e4] matches quantiles {v1} and {v2}"
        )));
    }
    let rate_for = |shape: f64| standard_gamma_quantile(shape, p1) / v1;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_ratio(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        let shape = (0.5 * (lo + hi)).exp();
        let g = GammaSI { shape, rate: rate_for(shape) };
        if (g.quantile(p1) - v1).abs() < 1e-8 && (g.quantile(p2) - v2).abs() < 1e-8 {
            return Ok(g);
        }
    }
    Err(Error::Solver(format!("quantile matching did not reach 1e-8 days for {v1}, {v2}")))
}

/// Gamma moment-matched to the pooled samples of several gamma densities.
pub fn pool_si(components: &[GammaSI], n_per: usize, seed: u64) -> Result<GammaSI> {
    if components.is_empty() {
        return Err(Error::Argument("need at least one serial-interval component".into()));
    }
    if n_per < 10_000 {
        return Err(Error::Argument(format!("need at least 10000 draws per component, got {n_per}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for g in components {
        let dist = Gamma::new(g.shape, 1.0 / g.rate)
            .map_err(|e| Error::Argument(format!("invalid component {g:?}: {e}")))?;
        for _ in 0..n_per {
            let x: f64 = dist.sample(&mut rng);
            sum += x;
            sum_sq += x * x;
        }
    }
    let n = (n_per * components.len()) as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    GammaSI::new(mean * mean / var, mean / var)
}

/// Daily serial-interval weights `rho_0..=rho_J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerialInterval {
    weights: Vec<f64>,
}

impl SerialInterval {
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Argument("weights must be at least two finite non-negative values".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Argument("weights sum to zero".into()));
        }
        Ok(Self { weights: weights.iter().map(|w| w / total).collect() })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_lag(&self) -> usize {
        self.weights.len() - 1
    }
}

/// Half-integer binning of `g` over lags `0..=max_lag`, renormalized. With
/// `same_day` false the lag-0 bin is dropped before renormalizing.
pub fn discretize_si(g: &GammaSI, max_lag: usize, same_day: bool) -> Result<SerialInterval> {
    if max_lag < 1 {
        return Err(Error::Argument("maximum lag must be at least 1".into()));
    }
    let mut w: Vec<f64> = (0..=max_lag)
        .map(|j| {
            let upper = g.cdf(j as f64 + 0.5);
            if j == 0 {
                upper
            } else {
                upper - g.cdf(j as f64 - 0.5)
            }
        })
        .collect();
    if !same_day {
        w[0] = 0.0;
    }
    SerialInterval::from_weights(w)
}

/// Per-day summaries of the effective reproduction ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RtSeries {
    /// Day indices (1-based) with `day > J`.
    pub days: Vec<usize>,
    pub mean: Vec<Option<f64>>,
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
    /// Centred 5-day moving average of `mean`, clipped at the ends.
    pub ma5: Vec<Option<f64>>,
    /// Lower 2.5% quantile above 1.
    pub sig_above_1: Vec<bool>,
}

impl RtSeries {
    /// CSV with columns `day,date,Rt_mean,Rt_lo,Rt_hi,Rt_ma5,sig_above_1`;
    /// undefined values are left empty.
    pub fn to_csv(&self, series: &EpidemicSeries) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("day,date,Rt_mean,Rt_lo,Rt_hi,Rt_ma5,sig_above_1\n");
        for (i, &t) in self.days.iter().enumerate() {
            out.push_str(&format!(
                "{t},{},{},{},{},{},{}\n",
                series.date(t),
                cell(self.mean[i]),
                cell(self.lo[i]),
                cell(self.hi[i]),
                cell(self.ma5[i]),
                self.sig_above_1[i] as u8
            ));
        }
        out
    }
}

/// `R_t = c_t / sum_j rho_j c_{t-j}` for each trajectory (day 1 first),
/// summarized across trajectories. A day is missing when any trajectory
/// has a zero denominator there.
pub fn effective_r(trajectories: &[Vec<f64>], si: &SerialInterval) -> Result<RtSeries> {
    let first = trajectories.first().ok_or_else(|| Error::Argument("no trajectories".into()))?;
    let n = first.len();
    let j_max = si.max_lag();
    if n <= j_max {
        return Err(Error::Argument(format!(
            "trajectories of {n} days are too short for lags up to {j_max}"
        )));
    }
    if trajectories.iter().any(|t| t.len() != n) {
        return Err(Error::Argument("trajectories differ in length".into()));
    }
    let rho = si.weights();
    let days: Vec<usize> = (j_max + 1..=n).collect();
    let mut mean = Vec::with_capacity(days.len());
    let mut lo = Vec::with_capacity(days.len());
    let mut hi = Vec::with_capacity(days.len());
    let mut values = Vec::with_capacity(trajectories.len());
    for &t in &days {
        values.clear();
        for traj in trajectories {
            let denom: f64 = rho.iter().enumerate().map(|(j, w)| w * traj[t - 1 - j]).sum();
            if !(denom > 0.0) {
                values.clear();
                break;
            }
            values.push(traj[t - 1] / denom);
        }
        if values.is_empty() {
            mean.push(None);
            lo.push(None);
            hi.push(None);
        } else {
            mean.push(Some(values.iter().sum::<f64>() / values.len() as f64));
            let q = quantiles(&values, &[0.025, 0.975]);
            lo.push(Some(q[0]));
            hi.push(Some(q[1]));
        }
    }
    let ma5 = (0..days.len())
        .map(|i| {
            let window: Vec<f64> = mean[i.saturating_sub(2)..=(i + 2).min(days.len() - 1)].iter().flatten().copied().collect();
            (!window.is_empty()).then(|| window.iter().sum::<f64>() / window.len() as f64)
        })
        .collect();
    let sig_above_1 = lo.iter().map(|l| l.is_some_and(|v| v > 1.0)).collect();
    Ok(RtSeries { days, mean, lo, hi, ma5, sig_above_1 })
}

/// Per-draw in-sample predicted counts of outcome `o` for days `1..=t_max`:
/// the fitted Poisson rate on likelihood days, the observed count elsewhere.
pub fn trajectories_from_draws(draws: &PosteriorDraws, o: usize, observed: &[u64], t_max: usize) -> Vec<Vec<f64>> {
    let days = &draws.outcome_days[o];
    draws
        .draws
        .iter()
        .map(|d| {
            let mut traj: Vec<f64> = observed[..t_max].iter().map(|&y| y as f64).collect();
            for (i, &t) in days.iter().enumerate() {
                traj[t - 1] = d.mu_det[o][i] * d.eps[o][i];
            }
            traj
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_matching_examples() {
        let g = gamma_from_mean_sd(3.5, 3.1).unwrap();
        assert!((g.shape - 1.2747).abs() < 1e-4);
        assert!((g.rate - 0.3642).abs() < 1e-4);
        assert_eq!(gamma_from_mean_sd(2.0, 2.0).unwrap().shape, 1.0);
        assert!(gamma_from_mean_sd(5.0, 0.0).is_err());
    }

    #[test]
    fn quantile_round_trip() {
        let truth = GammaSI::new(2.0, 0.5).unwrap();
        let (a, b) = (truth.quantile(0.25), truth.quantile(0.75));
        // Oracle: the rate-1 gamma CDF evaluated at the returned quantiles.
        assert!((gamma_lr(2.0, a * 0.5) - 0.25).abs() < 1e-12);
        let g = gamma_from_quantiles((0.25, a), (0.75, b)).unwrap();
        assert!((g.shape - 2.0).abs() < 1e-6, "{g:?}");
        assert!((g.rate - 0.5).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn quantile_input_errors() {
        assert!(gamma_from_quantiles((0.75, 5.0), (0.25, 2.0)).is_err());
        assert!(gamma_from_quantiles((0.5, 2.0), (0.5, 3.0)).is_err());
        assert!(gamma_from_quantiles((0.25, 3.0), (0.75, 2.0)).is_err());
    }

    #[test]
    fn discretized_weights() {
        let g = GammaSI::new(1.38, 0.36).unwrap();
        let si = discretize_si(&g, 16, true).unwrap();
        let w = si.weights();
        assert_eq!(w.len(), 17);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mode = (0..17).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap();
        assert_eq!(mode, 1);

        let tight = gamma_from_mean_sd(3.0, 0.1).unwrap();
        assert!(discretize_si(&tight, 16, true).unwrap().weights()[3] > 0.99);

        let no_same_day = discretize_si(&g, 16, false).unwrap();
        assert_eq!(no_same_day.weights()[0], 0.0);
        assert!(discretize_si(&g, 0, true).is_err());
    }

    #[test]
    fn constant_and_exponential_incidence() {
        let si = discretize_si(&GammaSI::default(), 16, true).unwrap();
        let rt = effective_r(&[vec![40.0; 30]], &si).unwrap();
        assert_eq!(rt.days.first(), Some(&17));
        assert!(rt.mean.iter().all(|m| (m.unwrap() - 1.0).abs() < 1e-12));

        let g = 0.1;
        let traj: Vec<f64> = (1..=40).map(|t| (g * t as f64).exp()).collect();
        let expect = 1.0 / si.weights().iter().enumerate().map(|(j, w)| w * (-g * j as f64).exp()).sum::<f64>();
        let rt = effective_r(&[traj], &si).unwrap();
        for m in &rt.mean {
            assert!((m.unwrap() - expect).abs() < 1e-9 * expect);
        }
        assert!(rt.sig_above_1.iter().all(|&s| s));
    }

    #[test]
    fn zero_denominator_is_missing() {
        let si = SerialInterval::from_weights(vec![0.0, 1.0]).unwrap();
        let rt = effective_r(&[vec![0.0, 0.0, 5.0, 5.0]], &si).unwrap();
        assert_eq!(rt.mean[0], None);
        assert_eq!(rt.mean[1], None);
        assert_eq!(rt.mean[2], Some(1.0));
        assert_eq!(rt.ma5[0], Some(1.0));
    }
}
