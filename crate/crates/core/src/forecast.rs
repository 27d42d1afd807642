//! Posterior-predictive forward simulation and cross-validation scores.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EpidemicSeries;
use crate::error::{Error, Result};
use crate::mcmc::{quantiles, Model, PosteriorDraws};
use crate::simulate::{draw_count, poisson_count};

const FORECAST_STREAM_OFFSET: u64 = 0x5851_f42d_4c95_7f2d;

/// How a forecast day's count is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PathMode {
    /// Effect draw, then a Poisson count.
    #[default]
    Stochastic,
    /// Unit effect and the mean rounded to a count.
    Deterministic,
}

/// One outcome along a forecast path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    /// New counts on horizon days `M+1..=M+F`.
    pub new: Vec<u64>,
    /// Cumulative counts on the same days.
    pub cum: Vec<f64>,
}

/// Forecast of every outcome from one retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPath {
    pub draw_id: usize,
    pub outcomes: Vec<PathOutcome>,
}

/// Random source for the path of `draw_id`.
pub fn path_rng(seed: u64, draw_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ FORECAST_STREAM_OFFSET);
    rng.set_stream(draw_id as u64);
    rng
}

fn simulate_path<M: Model>(
    model: &M,
    draws: &PosteriorDraws,
    draw_id: usize,
    m: usize,
    f: usize,
    seed: u64,
    mode: PathMode,
) -> ForecastPath {
    let theta = &draws.draws[draw_id].values[..draws.n_params];
    let mut rng = path_rng(seed, draw_id);
    let n_out = model.outcomes().len();
    let specs: Vec<_> = (0..n_out).map(|o| model.error_spec(theta, o)).collect();
    let mut c: Vec<f64> = (0..n_out).map(|o| model.observed_cumulative(o)[m - 1]).collect();
    let mut out: Vec<PathOutcome> =
        (0..n_out).map(|_| PathOutcome { new: Vec::with_capacity(f), cum: Vec::with_capacity(f) }).collect();
    for t in m + 1..=m + f {
        for o in 0..n_out {
            let mean = model.predictive_mean(theta, o, t, c[o]);
            let y = match mode {
                PathMode::Deterministic => draw_count(mean, &specs[o], true, &mut rng),
                PathMode::Stochastic if mean > 0.0 => {
                    poisson_count(mean * specs[o].sample_effect(&mut rng), &mut rng)
                }
                PathMode::Stochastic => 0,
            };
            c[o] += y as f64;
            out[o].new.push(y);
            out[o].cum.push(c[o]);
        }
    }
    ForecastPath { draw_id, outcomes: out }
}

/// One forecast path per retained draw, starting from the observed
/// cumulative counts on day `m`. Paths are generated in parallel; each has
/// its own random source derived from `(seed, draw_id)`.
pub fn predict_paths<M: Model>(
    model: &M,
    draws: &PosteriorDraws,
    m: usize,
    f: usize,
    seed: u64,
    mode: PathMode,
) -> Result<Vec<ForecastPath>> {
    if f == 0 {
        return Err(Error::Argument("forecast horizon must be at least 1 day".into()));
    }
    if draws.is_empty() {
        return Err(Error::Argument("no posterior draws to forecast from".into()));
    }
    let observed = model.observed_cumulative(0).len();
    if m != observed {
        return Err(Error::Argument(format!("draws were fitted through day {observed}, not {m}")));
    }
    let n = draws.len();
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n);
    if workers <= 1 || cfg!(target_arch = "wasm32") {
        return Ok((0..n).map(|id| simulate_path(model, draws, id, m, f, seed, mode)).collect());
    }
    let chunk = n.div_ceil(workers);
    let paths = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n))
                        .map(|id| simulate_path(model, draws, id, m, f, seed, mode))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("forecast thread panicked")).collect()
    });
    Ok(paths)
}

const FAN_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Per-day predictive summaries of every outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FanChart {
    pub outcome_names: Vec<String>,
    pub days: Vec<usize>,
    /// `[outcome][day]` mean and quantiles of the new counts.
    pub new: Vec<Vec<(f64, Vec<f64>)>>,
    /// `[outcome][day]` mean and quantiles of the cumulative counts.
    pub cum: Vec<Vec<(f64, Vec<f64>)>>,
}

impl FanChart {
    pub fn from_paths(paths: &[ForecastPath], outcome_names: &[String], m: usize) -> Result<Self> {
        let first = paths.first().ok_or_else(|| Error::Argument("no forecast paths".into()))?;
        let f = first.outcomes[0].new.len();
        let summarize = |values: Vec<f64>| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            (mean, quantiles(&values, &FAN_PROBS))
        };
        let mut new = Vec::new();
        let mut cum = Vec::new();
        for o in 0..first.outcomes.len() {
            new.push((0..f).map(|i| summarize(paths.iter().map(|p| p.outcomes[o].new[i] as f64).collect())).collect());
            cum.push((0..f).map(|i| summarize(paths.iter().map(|p| p.outcomes[o].cum[i]).collect())).collect());
        }
        Ok(Self { outcome_names: outcome_names.to_vec(), days: (m + 1..=m + f).collect(), new, cum })
    }

    /// CSV with `day,date` then mean and quantile columns per outcome,
    /// new counts first, then cumulative counts.
    pub fn to_csv(&self, series: &EpidemicSeries) -> String {
        let mut header = vec!["day".to_string(), "date".to_string()];
        for name in &self.outcome_names {
            for prefix in ["new", "cum"] {
                header.push(format!("{prefix}_{name}_mean"));
                for p in FAN_PROBS {
                    header.push(format!("{prefix}_{name}_q{}", p * 100.0));
                }
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for (i, &t) in self.days.iter().enumerate() {
            let mut row = vec![t.to_string(), series.date(t).to_string()];
            for o in 0..self.outcome_names.len() {
                for table in [&self.new, &self.cum] {
                    let (mean, q) = &table[o][i];
                    row.push(mean.to_string());
                    row.extend(q.iter().map(f64::to_string));
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Under,
    Satisfactory,
    Over,
}

impl Verdict {
    pub fn from_omega(omega: f64) -> Self {
        if omega <= 0.05 {
            Verdict::Under
        } else if omega >= 0.95 {
            Verdict::Over
        } else {
            Verdict::Satisfactory
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Under => "under",
            Verdict::Satisfactory => "satisfactory",
            Verdict::Over => "over",
        }
    }
}

/// Cross-validation score of one outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeScore {
    pub name: String,
    /// Share of draws whose horizon-average prediction exceeds the actual average.
    pub omega: f64,
    pub pred_lo: f64,
    pub pred_mean: f64,
    pub pred_hi: f64,
    pub actual_avg: f64,
    /// Actual average inside the 95% interval of predicted averages.
    pub covered: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub horizon: usize,
    pub outcomes: Vec<OutcomeScore>,
}

impl CrossValReport {
    pub fn get(&self, name: &str) -> Option<&OutcomeScore> {
        self.outcomes.iter().find(|s| s.name == name)
    }

    /// Overprediction probability of cases.
    pub fn omega_c(&self) -> Option<f64> {
        self.get("cases").map(|s| s.omega)
    }

    /// Overprediction probability of deaths.
    pub fn omega_d(&self) -> Option<f64> {
        self.get("deaths").map(|s| s.omega)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("outcome,omega,pred_avg_q2.5,pred_avg_mean,pred_avg_q97.5,actual_avg,covered,verdict\n");
        for s in &self.outcomes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.name,
                s.omega,
                s.pred_lo,
                s.pred_mean,
                s.pred_hi,
                s.actual_avg,
                s.covered,
                s.verdict.label()
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("Cross-validation over a {}-day horizon\n", self.horizon);
        for s in &self.outcomes {
            out.push_str(&format!(
                "{:<7} omega = {:.3} ({})  predicted average {:.1} [{:.1}, {:.1}]  actual {:.1}{}\n",
                s.name,
                s.omega,
                s.verdict.label(),
                s.pred_mean,
                s.pred_lo,
                s.pred_hi,
                s.actual_avg,
                if s.covered { "" } else { "  (outside interval)" }
            ));
        }
        out
    }
}

/// Scores forecast paths against held-out daily counts, one slice per
/// outcome covering exactly the horizon.
pub fn crossval(paths: &[ForecastPath], heldout: &[&[u64]], names: &[String]) -> Result<CrossValReport> {
    let first = paths.first().ok_or_else(|| Error::Argument("no forecast paths to score".into()))?;
    let f = first.outcomes[0].new.len();
    if heldout.len() != first.outcomes.len() || names.len() != heldout.len() {
        return Err(Error::Argument(format!(
            "paths have {} outcomes but {} held-out series and {} names were given",
            first.outcomes.len(),
            heldout.len(),
            names.len()
        )));
    }
    let mut outcomes = Vec::new();
    for (o, actual) in heldout.iter().enumerate() {
        if actual.len() != f {
            return Err(Error::Argument(format!(
                "held-out {} cover {} days, the horizon is {f}",
                names[o],
                actual.len()
            )));
        }
        let actual_avg = actual.iter().map(|&y| y as f64).sum::<f64>() / f as f64;
        let averages: Vec<f64> = paths
            .iter()
            .map(|p| p.outcomes[o].new.iter().map(|&y| y as f64).sum::<f64>() / f as f64)
            .collect();
        let omega = averages.iter().filter(|&&a| a > actual_avg).count() as f64 / averages.len() as f64;
        let q = quantiles(&averages, &[0.025, 0.975]);
        let pred_mean = averages.iter().sum::<f64>() / averages.len() as f64;
        outcomes.push(OutcomeScore {
            name: names[o].clone(),
            omega,
            pred_lo: q[0],
            pred_mean,
            pred_hi: q[1],
            actual_avg,
            covered: q[0] <= actual_avg && actual_avg <= q[1],
            verdict: Verdict::from_omega(omega),
        });
    }
    Ok(CrossValReport { horizon: f, outcomes })
}

/// Mean absolute deviation between observed counts and the posterior mean
/// of the in-sample Poisson rates of outcome `o`.
pub fn in_sample_mad(draws: &PosteriorDraws, o: usize, daily: &[u64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Argument("no posterior draws".into()));
    }
    let days = &draws.outcome_days[o];
    if days.is_empty() {
        return Err(Error::Argument("outcome has no likelihood days".into()));
    }
    let n = draws.len() as f64;
    let total: f64 = days
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let fitted = draws.draws.iter().map(|d| d.mu_det[o][i] * d.eps[o][i]).sum::<f64>() / n;
            (fitted - daily[t - 1] as f64).abs()
        })
        .sum();
    Ok(total / days.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(id: usize, cases: &[u64]) -> ForecastPath {
        let mut c = 0.0;
        let cum = cases
            .iter()
            .map(|&y| {
                c += y as f64;
                c
            })
            .collect();
        ForecastPath { draw_id: id, outcomes: vec![PathOutcome { new: cases.to_vec(), cum }] }
    }

    fn names() -> Vec<String> {
        vec!["cases".to_string()]
    }

    #[test]
    fn all_overpredicting_draws() {
        let paths: Vec<_> = (0..10).map(|i| path(i, &[100, 100])).collect();
        let r = crossval(&paths, &[&[50, 50]], &names()).unwrap();
        assert_eq!(r.omega_c(), Some(1.0));
        assert_eq!(r.outcomes[0].verdict, Verdict::Over);
        assert!(!r.outcomes[0].covered);
    }

    #[test]
    fn symmetric_predictions_are_satisfactory() {
        let paths: Vec<_> = (0..100).map(|i| path(i, &[i as u64])).collect();
        let r = crossval(&paths, &[&[50]], &names()).unwrap();
        // 49 draws above, one tie (counts as not over), 50 below.
        assert_eq!(r.omega_c(), Some(0.49));
        assert_eq!(r.outcomes[0].verdict, Verdict::Satisfactory);
    }

    #[test]
    fn ties_are_not_overpredictions() {
        let paths = vec![path(0, &[10, 20])];
        let r = crossval(&paths, &[&[15, 15]], &names()).unwrap();
        assert_eq!(r.omega_c(), Some(0.0));
        assert_eq!(r.outcomes[0].verdict, Verdict::Under);
    }

    #[test]
    fn verdict_boundaries() {
        assert_eq!(Verdict::from_omega(0.05), Verdict::Under);
        assert_eq!(Verdict::from_omega(0.0501), Verdict::Satisfactory);
        assert_eq!(Verdict::from_omega(0.95), Verdict::Over);
    }

    #[test]
    fn crossval_input_errors() {
        assert!(crossval(&[], &[&[1]], &names()).is_err());
        let paths = vec![path(0, &[1, 2])];
        assert!(crossval(&paths, &[&[1]], &names()).is_err());
    }
}
