//! Synthetic epidemics drawn from the fitted model's generative direction.
//!
//! Latent effects are not mean-corrected: the lognormal and log-Student
//! families centre `log eps` at zero, exactly as in the likelihood.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::EpidemicSeries;
use crate::errmodel::ErrorSpec;
use crate::error::{Error, Result};
use crate::growth::GrowthParams;
use crate::multiphase::PhasePlan;

/// Poisson rates above this are clamped before sampling.
pub const MAX_POISSON_RATE: f64 = 1e15;

/// Case growth: one curve or a switch-point plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseGrowth {
    Single(GrowthParams),
    Phased(PhasePlan),
}

impl CaseGrowth {
    /// Unchecked mean on day `t`.
    pub fn rate(&self, c_prev: f64, t: usize) -> f64 {
        match self {
            CaseGrowth::Single(g) => g.rate(c_prev),
            CaseGrowth::Phased(p) => p.rate(c_prev, t as f64),
        }
    }

    /// Final size of the first (or only) phase.
    pub fn first_k(&self) -> f64 {
        match self {
            CaseGrowth::Single(g) => g.k,
            CaseGrowth::Phased(p) => p.phases()[0].k,
        }
    }

    fn growth(&self) -> GrowthParams {
        match self {
            CaseGrowth::Single(g) => *g,
            CaseGrowth::Phased(p) => p.phases()[0],
        }
    }
}

/// Death curve tied to the cases: `K_d = phi * K_c`, same growth family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathSpec {
    pub phi: f64,
    pub r: f64,
    pub a: f64,
    /// Deaths on day 1.
    pub d1: u64,
    pub error: ErrorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub cases: CaseGrowth,
    pub error: ErrorSpec,
    /// Series length in days.
    pub t_len: usize,
    /// Cases on day 1.
    pub c1: u64,
    pub deaths: Option<DeathSpec>,
    pub origin: NaiveDate,
    pub seed: u64,
    /// Unit effects and rounded means instead of Poisson draws.
    pub deterministic: bool,
}

impl SimSpec {
    pub fn new(cases: CaseGrowth, error: ErrorSpec, t_len: usize, c1: u64, seed: u64) -> Self {
        Self {
            cases,
            error,
            t_len,
            c1,
            deaths: None,
            origin: NaiveDate::from_ymd_opt(2020, 2, 1).expect("valid date"),
            seed,
            deterministic: false,
        }
    }

    pub fn with_deaths(mut self, deaths: DeathSpec) -> Self {
        self.deaths = Some(deaths);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_len < 3 {
            return Err(Error::Argument(format!("need at least 3 days, got {}", self.t_len)));
        }
        if self.c1 == 0 {
            return Err(Error::Argument("day-1 cases must be at least 1".into()));
        }
        match &self.cases {
            CaseGrowth::Single(g) => g.validate()?,
            CaseGrowth::Phased(p) => {
                for g in p.phases() {
                    g.validate()?;
                }
            }
        }
        self.error.validate()?;
        if let Some(d) = &self.deaths {
            if !(d.phi > 0.0 && d.phi < 1.0) {
                return Err(Error::Argument(format!("phi must lie in (0, 1), got {}", d.phi)));
            }
            if d.d1 == 0 {
                return Err(Error::Argument("day-1 deaths must be at least 1".into()));
            }
            self.death_growth(d).validate()?;
            d.error.validate()?;
        }
        Ok(())
    }

    /// Growth curve of the deaths.
    pub fn death_growth(&self, d: &DeathSpec) -> GrowthParams {
        let g = self.cases.growth();
        GrowthParams { family: g.family, r: d.r, k: d.phi * self.cases.first_k(), a: d.a }
    }
}

/// One day's count given the mean and an effect draw.
pub fn draw_count(mean: f64, error: &ErrorSpec, deterministic: bool, rng: &mut ChaCha8Rng) -> u64 {
    if deterministic {
        return if mean > 0.0 && mean.is_finite() { mean.round() as u64 } else { 0 };
    }
    let eps = error.sample_effect(rng);
    poisson_count(mean * eps, rng)
}

/// `Poisson(rate)`, zero for non-positive or non-finite rates.
pub fn poisson_count(rate: f64, rng: &mut ChaCha8Rng) -> u64 {
    if !(rate > 0.0) || rate.is_nan() {
        return 0;
    }
    let rate = rate.min(MAX_POISSON_RATE);
    Poisson::new(rate).map_or(0, |p| p.sample(rng) as u64)
}

/// Generates a series from `spec`; the same spec always gives the same series.
pub fn simulate_epidemic(spec: &SimSpec) -> Result<EpidemicSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.t_len;
    let death_growth = spec.deaths.as_ref().map(|d| (spec.death_growth(d), d));
    let mut cases = vec![0u64; n];
    let mut deaths = vec![0u64; n];
    cases[0] = spec.c1;
    deaths[0] = death_growth.map_or(0, |(_, d)| d.d1);
    let (mut c_cum, mut d_cum) = (cases[0] as f64, deaths[0] as f64);
    for t in 2..=n {
        let c = draw_count(spec.cases.rate(c_cum, t), &spec.error, spec.deterministic, &mut rng);
        cases[t - 1] = c;
        if let Some((g, d)) = &death_growth {
            let y = draw_count(g.rate(d_cum), &d.error, spec.deterministic, &mut rng);
            deaths[t - 1] = y;
            d_cum += y as f64;
        }
        c_cum += c as f64;
    }
    EpidemicSeries::from_counts(spec.origin, cases, deaths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn richards_spec(seed: u64) -> SimSpec {
        let g = GrowthParams::richards(0.25, 200_000.0, 0.5).unwrap();
        SimSpec::new(CaseGrowth::Single(g), ErrorSpec::PoissonGamma { lambda: 10.0 }, 120, 10, seed)
    }

    #[test]
    fn deterministic_mode_follows_rounded_recursion() {
        let mut spec = richards_spec(1);
        spec.deterministic = true;
        let s = simulate_epidemic(&spec).unwrap();
        let g = GrowthParams::richards(0.25, 200_000.0, 0.5).unwrap();
        let mut c = 10.0;
        for t in 2..=120 {
            let expect = g.rate(c).round();
            assert_eq!(s.cases()[t - 1] as f64, expect);
            c += expect;
        }
    }

    #[test]
    fn same_seed_same_series() {
        let a = simulate_epidemic(&richards_spec(7)).unwrap();
        let b = simulate_epidemic(&richards_spec(7)).unwrap();
        let c = simulate_epidemic(&richards_spec(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn saturated_curve_gives_zero_counts() {
        let g = GrowthParams::logistic(0.5, 20.0).unwrap();
        let mut spec = SimSpec::new(CaseGrowth::Single(g), ErrorSpec::PoissonGamma { lambda: 1e6 }, 40, 20, 3);
        spec.deterministic = false;
        let s = simulate_epidemic(&spec).unwrap();
        assert!(s.cases()[1..].iter().all(|&c| c == 0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = richards_spec(1);
        spec.c1 = 0;
        assert!(simulate_epidemic(&spec).is_err());
        let mut spec = richards_spec(1);
        spec.t_len = 2;
        assert!(simulate_epidemic(&spec).is_err());
    }
}
