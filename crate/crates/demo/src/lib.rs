//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exported: a deterministic growth-curve explorer,
//! a simulate-fit-forecast round trip on synthetic data, and reproduction
//! ratios computed from that fit. The plain Rust functions underneath are
//! public so they can be tested natively.

use wasm_bindgen::prelude::*;

use epiforecast::errmodel::ErrorFamily;
use epiforecast::forecast::{crossval, predict_paths, FanChart, PathMode};
use epiforecast::growth::{turning_point, Family, GrowthParams};
use epiforecast::mcmc::{fit_bivariate, summarize, ModelConfig, SamplerConfig, CASES};
use epiforecast::rtestim::{discretize_si, effective_r, gamma_from_mean_sd, trajectories_from_draws};
use epiforecast::simulate::{simulate_epidemic, CaseGrowth, DeathSpec, SimSpec};

/// Deterministic cumulative curve and daily means.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct CurveView {
    cumulative: Vec<f64>,
    incidence: Vec<f64>,
    peak_day: f64,
    peak_threshold: f64,
}

#[wasm_bindgen]
impl CurveView {
    #[wasm_bindgen(getter)]
    pub fn cumulative(&self) -> Vec<f64> {
        self.cumulative.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn incidence(&self) -> Vec<f64> {
        self.incidence.clone()
    }

    /// Turning point; `NaN` when the curve never reaches it.
    #[wasm_bindgen(getter, js_name = peakDay)]
    pub fn peak_day(&self) -> f64 {
        self.peak_day
    }

    #[wasm_bindgen(getter, js_name = peakThreshold)]
    pub fn peak_threshold(&self) -> f64 {
        self.peak_threshold
    }
}

/// Runs the mean recursion `C_t = C_{t-1} + mu(C_{t-1})` from `c1` cases.
pub fn growth_curve(family: &str, r: f64, k: f64, a: f64, c1: f64, days: usize) -> Result<CurveView, String> {
    let family = match family {
        "richards" => Family::Richards,
        "logistic" => Family::Logistic,
        "gompertz" => Family::Gompertz,
        other => return Err(format!("unknown growth family '{other}'")),
    };
    let g = GrowthParams::new(family, r, k, a).map_err(|e| e.to_string())?;
    if !(c1 > 0.0 && c1 < k) {
        return Err(format!("initial cases must lie in (0, K), got {c1}"));
    }
    let days = days.clamp(2, 2000);
    let mut cumulative = vec![c1];
    let mut incidence = vec![c1];
    for _ in 1..days {
        let prev = *cumulative.last().unwrap();
        let mu = g.rate(prev).max(0.0);
        incidence.push(mu);
        cumulative.push(prev + mu);
    }
    let tp = turning_point(&g, &cumulative);
    Ok(CurveView {
        cumulative,
        incidence,
        peak_day: if tp.reached { tp.tau } else { f64::NAN },
        peak_threshold: tp.peak_threshold,
    })
}

#[wasm_bindgen(js_name = growthCurve)]
pub fn growth_curve_js(family: &str, r: f64, k: f64, a: f64, c1: f64, days: usize) -> Result<CurveView, JsError> {
    growth_curve(family, r, k, a, c1, days).map_err(|e| JsError::new(&e))
}

/// A fit to the first `m` days of a synthetic epidemic and its forecast.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct ForecastView {
    observed: Vec<f64>,
    fitted: Vec<f64>,
    fan_lo: Vec<f64>,
    fan_mid: Vec<f64>,
    fan_hi: Vec<f64>,
    m: usize,
    omega_c: f64,
    omega_d: f64,
    k_c: Vec<f64>,
    summary: String,
    trajectories: Vec<Vec<f64>>,
}

#[wasm_bindgen]
impl ForecastView {
    /// Observed daily cases over the full series.
    #[wasm_bindgen(getter)]
    pub fn observed(&self) -> Vec<f64> {
        self.observed.clone()
    }

    /// Posterior mean of the fitted daily rate on days `1..=m`.
    #[wasm_bindgen(getter)]
    pub fn fitted(&self) -> Vec<f64> {
        self.fitted.clone()
    }

    #[wasm_bindgen(getter, js_name = fanLo)]
    pub fn fan_lo(&self) -> Vec<f64> {
        self.fan_lo.clone()
    }

    #[wasm_bindgen(getter, js_name = fanMid)]
    pub fn fan_mid(&self) -> Vec<f64> {
        self.fan_mid.clone()
    }

    #[wasm_bindgen(getter, js_name = fanHi)]
    pub fn fan_hi(&self) -> Vec<f64> {
        self.fan_hi.clone()
    }

    #[wasm_bindgen(getter, js_name = trainingEnd)]
    pub fn training_end(&self) -> usize {
        self.m
    }

    #[wasm_bindgen(getter, js_name = omegaCases)]
    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    #[wasm_bindgen(getter, js_name = omegaDeaths)]
    pub fn omega_d(&self) -> f64 {
        self.omega_d
    }

    /// Mean, 2.5% and 97.5% quantiles of the final case count.
    #[wasm_bindgen(getter, js_name = finalSize)]
    pub fn final_size(&self) -> Vec<f64> {
        self.k_c.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }

    /// Reproduction ratio over the training window from the fitted
    /// trajectories, with a gamma serial interval of the given mean and sd.
    /// Undefined days are `NaN`.
    pub fn rt(&self, si_mean: f64, si_sd: f64) -> Result<RtView, JsError> {
        self.reproduction(si_mean, si_sd).map_err(|e| JsError::new(&e))
    }
}

impl ForecastView {
    pub fn reproduction(&self, si_mean: f64, si_sd: f64) -> Result<RtView, String> {
        let g = gamma_from_mean_sd(si_mean, si_sd).map_err(|e| e.to_string())?;
        let si = discretize_si(&g, 16, true).map_err(|e| e.to_string())?;
        let rt = effective_r(&self.trajectories, &si).map_err(|e| e.to_string())?;
        let nan = |v: &[Option<f64>]| v.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
        Ok(RtView {
            days: rt.days.iter().map(|&d| d as f64).collect(),
            mean: nan(&rt.mean),
            lo: nan(&rt.lo),
            hi: nan(&rt.hi),
        })
    }
}

/// Settings of [`fit_and_forecast`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoRun {
    pub family: ErrorFamily,
    pub r: f64,
    pub k: f64,
    pub a: f64,
    pub days: usize,
    pub m: usize,
    pub n_iter: usize,
    pub seed: u64,
}

/// Simulates cases and deaths, fits the first `m` days and forecasts the rest.
pub fn fit_and_forecast(run: &DemoRun) -> Result<ForecastView, String> {
    let err = |e: epiforecast::Error| e.to_string();
    if !(run.m >= 10 && run.m < run.days && run.days <= 400) {
        return Err(format!("need 10 <= M < T <= 400 (M = {}, T = {})", run.m, run.days));
    }
    let g = GrowthParams::richards(run.r, run.k, run.a).map_err(err)?;
    let noise = run.family.spec(20.0, 4.0);
    let spec = SimSpec::new(CaseGrowth::Single(g), noise, run.days, 10, run.seed).with_deaths(DeathSpec {
        phi: 0.1,
        r: run.r * 1.2,
        a: run.a,
        d1: 1,
        error: noise,
    });
    let series = simulate_epidemic(&spec).map_err(err)?;
    let sampler = SamplerConfig {
        n_iter: run.n_iter.max(200),
        thin: (run.n_iter / 1000).max(1),
        seed: run.seed,
        ..Default::default()
    };
    let (model, draws) = fit_bivariate(&series, run.m, &ModelConfig::with_family(run.family), &sampler).map_err(err)?;
    let f = run.days - run.m;
    let paths = predict_paths(&model, &draws, run.m, f, run.seed, PathMode::Stochastic).map_err(err)?;
    let fan = FanChart::from_paths(&paths, &draws.outcome_names, run.m).map_err(err)?;
    let heldout_c = &series.cases()[run.m..];
    let heldout_d = &series.deaths()[run.m..];
    let report = crossval(&paths, &[heldout_c, heldout_d], &draws.outcome_names).map_err(err)?;

    let trajectories = trajectories_from_draws(&draws, CASES, series.cases(), run.m);
    let n = trajectories.len() as f64;
    let fitted = (0..run.m).map(|i| trajectories.iter().map(|t| t[i]).sum::<f64>() / n).collect();
    let cases_fan = &fan.new[CASES];
    let names = model.summary_names();
    let summary = summarize(&draws, &names, &[0.025, 0.5, 0.975]);
    let k = summary.get("K_c").ok_or("no K_c summary")?;
    Ok(ForecastView {
        observed: series.cases().iter().map(|&y| y as f64).collect(),
        fitted,
        fan_lo: cases_fan.iter().map(|d| d.1[0]).collect(),
        fan_mid: cases_fan.iter().map(|d| d.1[2]).collect(),
        fan_hi: cases_fan.iter().map(|d| d.1[4]).collect(),
        m: run.m,
        omega_c: report.omega_c().unwrap_or(f64::NAN),
        omega_d: report.omega_d().unwrap_or(f64::NAN),
        k_c: vec![k.mean, k.quantiles[0], k.quantiles[2]],
        summary: format!("{}\n{}", summary.to_text(), report.to_text()),
        trajectories,
    })
}

#[wasm_bindgen(js_name = fitAndForecast)]
#[allow(clippy::too_many_arguments)]
pub fn fit_and_forecast_js(
    family: &str,
    r: f64,
    k: f64,
    a: f64,
    days: usize,
    m: usize,
    n_iter: usize,
    seed: u32,
) -> Result<ForecastView, JsError> {
    let family: ErrorFamily = family.parse().map_err(|e: epiforecast::Error| JsError::new(&e.to_string()))?;
    let run = DemoRun { family, r, k, a, days, m, n_iter, seed: seed as u64 };
    fit_and_forecast(&run).map_err(|e| JsError::new(&e))
}

/// Daily reproduction ratio summaries.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct RtView {
    days: Vec<f64>,
    mean: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[wasm_bindgen]
impl RtView {
    #[wasm_bindgen(getter)]
    pub fn days(&self) -> Vec<f64> {
        self.days.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn lo(&self) -> Vec<f64> {
        self.lo.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn hi(&self) -> Vec<f64> {
        self.hi.clone()
    }
}
