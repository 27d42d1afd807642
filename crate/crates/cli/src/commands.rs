use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use epiforecast::data::{build_series, parse_csv, trim_to_first_case, ColumnSchema, EpidemicSeries, NegativePolicy};
use epiforecast::forecast::{crossval as score_crossval, predict_paths, FanChart, PathMode};
use epiforecast::growth::GrowthParams;
use epiforecast::mcmc::diagnostics::rhat_csv;
use epiforecast::mcmc::{fit_bivariate, gelman_rubin, max_rhat, summarize, waic, ModelConfig, PosteriorDraws, CASES, DEFAULT_PROBS};
use epiforecast::multiphase::{fit_multiphase, FittedCurve, PhasePlan};
use epiforecast::rtestim::{
    discretize_si, effective_r, gamma_from_mean_sd, gamma_from_quantiles, pool_si, trajectories_from_draws, GammaSI,
};
use epiforecast::simulate::{simulate_epidemic, CaseGrowth, DeathSpec, SimSpec};

use crate::cli::{Cli, Command};
use crate::config::RunConfig;
use crate::exit::CliError;
use crate::output::RunDir;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let si = match &cli.command {
        Command::Rt(si) => Some(si),
        _ => None,
    };
    let cfg = RunConfig::resolve(&cli.flags, si)?;
    match &cli.command {
        Command::Ingest => ingest(&cfg),
        Command::Fit => fit(&cfg),
        Command::Forecast => forecast(&cfg),
        Command::Crossval => crossval(&cfg),
        Command::Multiphase => multiphase(&cfg),
        Command::Rt(_) => rt(&cfg),
        Command::Simulate => simulate(&cfg),
    }
}

fn data_error(path: &Path, e: epiforecast::Error) -> CliError {
    match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Reads an ECDC download (recognised by its `dateRep` column) or a series
/// CSV, and starts it at the first day with cases.
pub fn load_series(cfg: &RunConfig) -> Result<EpidemicSeries, CliError> {
    let path = cfg.input()?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = text.lines().next().unwrap_or("");
    let ecdc = header.split(',').any(|h| h.trim().trim_start_matches('\u{feff}') == "dateRep");
    let schema = if ecdc { ColumnSchema::ecdc() } else { ColumnSchema::series() };
    let region = cfg.region.as_deref();
    if region.is_some() && !ecdc {
        return Err(CliError::Config(format!("--region given but {} has no region column", path.display())));
    }
    let records = parse_csv(&text, &schema, region).map_err(|e| data_error(path, e))?;
    if region.is_none() {
        let mut regions: Vec<&str> = records.iter().map(|r| r.region.as_str()).collect();
        regions.sort_unstable();
        regions.dedup();
        if regions.len() > 1 {
            return Err(CliError::Config(format!(
                "{} holds {} regions; select one with --region",
                path.display(),
                regions.len()
            )));
        }
    }
    if records.is_empty() {
        let what = region.map_or(String::new(), |r| format!(" for region '{r}'"));
        return Err(CliError::Data(format!("{}: no records{what}", path.display())));
    }
    let policy = if cfg.clamp_negative { NegativePolicy::ClampZero } else { NegativePolicy::Error };
    build_series(trim_to_first_case(&records), policy).map_err(|e| data_error(path, e))
}

fn training_end(cfg: &RunConfig, series: &EpidemicSeries) -> Result<usize, CliError> {
    let m = cfg.m.unwrap_or(series.len());
    if m < 3 {
        return Err(CliError::Config(format!("training end M must be at least 3, got {m}")));
    }
    if m > series.len() {
        return Err(CliError::Data(format!("training end M = {m} but the series has {} days", series.len())));
    }
    Ok(m)
}

fn model_config(cfg: &RunConfig) -> ModelConfig {
    ModelConfig {
        growth: cfg.growth,
        error_cases: cfg.family,
        error_deaths: cfg.family,
        allow_negative_mean: cfg.allow_negative_mean,
        prior: cfg.prior.clone(),
    }
}

fn input_list(cfg: &RunConfig) -> Vec<(&'static str, &Path)> {
    cfg.input.as_deref().map(|p| vec![("input", p)]).unwrap_or_default()
}

fn trajectories_csv(trajectories: &[Vec<f64>]) -> String {
    let len = trajectories.first().map_or(0, Vec::len);
    let mut out = String::from("draw");
    for t in 1..=len {
        out.push_str(&format!(",{t}"));
    }
    out.push('\n');
    for (i, traj) in trajectories.iter().enumerate() {
        out.push_str(&i.to_string());
        for v in traj {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn read_trajectories(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let row = line
            .split(',')
            .skip(1)
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{} holds no trajectories", path.display())));
    }
    Ok(out)
}

/// Posterior outputs shared by every fitting command. Returns the
/// convergence verdict and the text summary.
struct FitReport {
    text: String,
    converged: Option<String>,
}

fn write_posterior(
    out: &mut RunDir,
    cfg: &RunConfig,
    series: &EpidemicSeries,
    m: usize,
    draws: &PosteriorDraws,
    summary_names: &[&str],
) -> Result<FitReport, CliError> {
    out.write("series.csv", &series.truncate(m)?.to_csv())?;
    out.write("draws.csv", &draws.to_csv())?;
    let summary = summarize(draws, summary_names, &DEFAULT_PROBS);
    out.write("summary.csv", &summary.to_csv())?;
    let rhats = gelman_rubin(draws)?;
    out.write("rhat.csv", &rhat_csv(&rhats))?;
    let report = waic(draws)?;
    out.write("waic.csv", &report.to_csv())?;
    let observed = [series.cases(), series.deaths()];
    for (o, name) in draws.outcome_names.iter().enumerate() {
        let curve = FittedCurve::from_draws(draws, o)?;
        out.write(&format!("fitted_{name}.csv"), &curve.to_csv(series, observed[o]))?;
    }
    let trajectories = trajectories_from_draws(draws, CASES, series.cases(), m);
    out.write("trajectories.csv", &trajectories_csv(&trajectories))?;

    let worst = max_rhat(&rhats);
    let threshold = cfg.sampler.rhat_threshold;
    let mut text = format!(
        "Training days 1..{m} ({} to {}), {} error, {} growth\n{} chains, {} retained draws, max R-hat {worst:.3}\n\n",
        series.date(1),
        series.date(m),
        cfg.family,
        cfg.growth,
        draws.n_chains,
        draws.len(),
    );
    text.push_str(&summary.to_text());
    text.push('\n');
    text.push_str("WAIC\n");
    text.push_str(&report.to_csv());
    let converged = (worst > threshold).then(|| {
        let names: Vec<&str> = rhats.iter().filter(|r| r.value > threshold).map(|r| r.name.as_str()).collect();
        format!("R-hat above {threshold} for {}", names.join(", "))
    });
    if let Some(msg) = &converged {
        text.push_str(&format!("\nWARNING: {msg}\n"));
    }
    Ok(FitReport { text, converged })
}

fn finish(out: &mut RunDir, cfg: &RunConfig, command: &str, text: &str, converged: Option<String>) -> Result<(), CliError> {
    out.write("summary.txt", text)?;
    out.write_manifest(command, cfg, &input_list(cfg))?;
    match converged {
        Some(msg) if !cfg.allow_unconverged => Err(CliError::Convergence(format!(
            "{msg}; outputs were written to {} (use --allow-unconverged to accept)",
            out.path().display()
        ))),
        Some(msg) => {
            log::warn!("{msg}");
            Ok(())
        }
        None => Ok(()),
    }
}

fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let mut out = RunDir::create(&cfg.out)?;
    out.write("series.csv", &series.to_csv())?;
    let text = format!(
        "{} days, {} to {}\ncases {} deaths {}\n",
        series.len(),
        series.date(1),
        series.date(series.len()),
        series.cum_cases().last().copied().unwrap_or(0),
        series.cum_deaths().last().copied().unwrap_or(0)
    );
    finish(&mut out, cfg, "ingest", &text, None)
}

fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let m = training_end(cfg, &series)?;
    let mut out = RunDir::create(&cfg.out)?;
    let (model, draws) = fit_bivariate(&series, m, &model_config(cfg), &cfg.sampler_config())?;
    let report = write_posterior(&mut out, cfg, &series, m, &draws, &model.summary_names())?;
    finish(&mut out, cfg, "fit", &report.text, report.converged)
}

fn check_horizon(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.f == 0 {
        return Err(CliError::Config("forecast horizon F must be at least 1".into()));
    }
    Ok(())
}

fn forecast(cfg: &RunConfig) -> Result<(), CliError> {
    check_horizon(cfg)?;
    let series = load_series(cfg)?;
    let m = training_end(cfg, &series)?;
    let mut out = RunDir::create(&cfg.out)?;
    let (model, draws) = fit_bivariate(&series, m, &model_config(cfg), &cfg.sampler_config())?;
    let mut report = write_posterior(&mut out, cfg, &series, m, &draws, &model.summary_names())?;
    let paths = predict_paths(&model, &draws, m, cfg.f, cfg.seed, PathMode::Stochastic)?;
    let fan = FanChart::from_paths(&paths, &draws.outcome_names, m)?;
    out.write("fan.csv", &fan.to_csv(&series))?;
    report.text.push_str(&format!("\nForecast of days {}..{} written to fan.csv\n", m + 1, m + cfg.f));
    finish(&mut out, cfg, "forecast", &report.text, report.converged)
}

fn crossval(cfg: &RunConfig) -> Result<(), CliError> {
    check_horizon(cfg)?;
    let series = load_series(cfg)?;
    let m = training_end(cfg, &series)?;
    let end = m + cfg.f;
    if end > series.len() {
        return Err(CliError::Data(format!(
            "cross-validation needs {end} days (M = {m}, F = {}) but the series has {}",
            cfg.f,
            series.len()
        )));
    }
    let mut out = RunDir::create(&cfg.out)?;
    let (model, draws) = fit_bivariate(&series, m, &model_config(cfg), &cfg.sampler_config())?;
    let mut report = write_posterior(&mut out, cfg, &series, m, &draws, &model.summary_names())?;
    let paths = predict_paths(&model, &draws, m, cfg.f, cfg.seed, PathMode::Stochastic)?;
    let fan = FanChart::from_paths(&paths, &draws.outcome_names, m)?;
    out.write("fan.csv", &fan.to_csv(&series))?;
    let heldout = [&series.cases()[m..end], &series.deaths()[m..end]];
    let scores = score_crossval(&paths, &heldout, &draws.outcome_names)?;
    out.write("crossval.csv", &scores.to_csv())?;
    out.write("crossval.txt", &scores.to_text())?;
    report.text = format!("{}\n{}", scores.to_text(), report.text);
    finish(&mut out, cfg, "crossval", &report.text, report.converged)
}

fn multiphase(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let m = training_end(cfg, &series)?;
    let mut out = RunDir::create(&cfg.out)?;
    let (_, draws) = fit_multiphase(&series, m, &cfg.multiphase_config(), &cfg.sampler_config())?;
    let names: Vec<&str> = draws.names.iter().map(String::as_str).collect();
    let report = write_posterior(&mut out, cfg, &series, m, &draws, &names)?;
    let text = format!("{}-phase model\n{}", cfg.multiphase.phases, report.text);
    finish(&mut out, cfg, "multiphase", &text, report.converged)
}

/// Serial interval from, in order of precedence: shape and rate, two
/// quantiles, pooled components, mean and sd.
fn resolve_si(cfg: &RunConfig) -> Result<(GammaSI, String), CliError> {
    let si = &cfg.si;
    match (si.shape, si.rate) {
        (Some(shape), Some(rate)) => return Ok((GammaSI::new(shape, rate)?, "shape/rate".into())),
        (None, None) => {}
        _ => return Err(CliError::Config("serial-interval shape and rate must be given together".into())),
    }
    if let Some(q) = &si.quantiles {
        if q.len() != 2 {
            return Err(CliError::Config(format!("expected 2 serial-interval quantiles, got {}", q.len())));
        }
        let g = gamma_from_quantiles((q[0][0], q[0][1]), (q[1][0], q[1][1]))?;
        return Ok((g, "quantiles".into()));
    }
    if let Some(path) = &si.components {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read serial-interval components {}: {e}", path.display())))?;
        let mut comps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
            if fields.len() != 2 {
                return Err(CliError::Config(format!("{} line {}: expected 'shape rate'", path.display(), i + 1)));
            }
            comps.push(GammaSI::new(fields[0], fields[1])?);
        }
        return Ok((pool_si(&comps, si.pool_draws, cfg.seed)?, format!("pooled from {} components", comps.len())));
    }
    Ok((gamma_from_mean_sd(si.mean, si.sd)?, "mean/sd".into()))
}

fn rt(cfg: &RunConfig) -> Result<(), CliError> {
    let (trajectories, series, source, inputs): (Vec<Vec<f64>>, EpidemicSeries, String, Vec<(&str, PathBuf)>) =
        match &cfg.si.from {
            Some(dir) => {
                let artifact = |name: &str| {
                    let p = dir.join(name);
                    if p.is_file() {
                        Ok(p)
                    } else {
                        Err(CliError::Config(format!(
                            "{} is missing; run `fit` or `multiphase` with --out {} first",
                            p.display(),
                            dir.display()
                        )))
                    }
                };
                let series_path = artifact("series.csv")?;
                let traj_path = artifact("trajectories.csv")?;
                let text = fs::read_to_string(&series_path)?;
                let series = EpidemicSeries::from_csv(&text).map_err(|e| data_error(&series_path, e))?;
                let trajectories = read_trajectories(&traj_path)?;
                if trajectories.iter().any(|t| t.len() != series.len()) {
                    return Err(CliError::Data(format!(
                        "{} does not match the {}-day series",
                        traj_path.display(),
                        series.len()
                    )));
                }
                let n = trajectories.len();
                (trajectories, series, format!("{n} posterior trajectories"), vec![("series", series_path), ("trajectories", traj_path)])
            }
            None => {
                let series = load_series(cfg)?;
                let m = training_end(cfg, &series)?;
                let series = series.truncate(m)?;
                let observed = vec![series.cases().iter().map(|&c| c as f64).collect()];
                (observed, series, "observed cases".into(), Vec::new())
            }
        };
    let (gamma, how) = resolve_si(cfg)?;
    let si = discretize_si(&gamma, cfg.si.max_lag, cfg.si.same_day)?;
    let rts = effective_r(&trajectories, &si)?;

    let mut out = RunDir::create(&cfg.out)?;
    out.write("rt.csv", &rts.to_csv(&series))?;
    let mut si_csv = String::from("lag,weight\n");
    for (j, w) in si.weights().iter().enumerate() {
        si_csv.push_str(&format!("{j},{w}\n"));
    }
    out.write("si.csv", &si_csv)?;

    let mut text = format!(
        "R_t from {source}\nserial interval ({how}): gamma shape {:.4} rate {:.4} (mean {:.3}, sd {:.3}), {} lags\n",
        gamma.shape,
        gamma.rate,
        gamma.mean(),
        gamma.sd(),
        si.max_lag()
    );
    let flagged: Vec<usize> = rts.days.iter().zip(&rts.sig_above_1).filter(|(_, &s)| s).map(|(&t, _)| t).collect();
    text.push_str(&format!("{} days with the 95% interval above 1\n", flagged.len()));
    text.push_str("last 14 days (day, date, mean, 5-day MA, significant):\n");
    let n = rts.days.len();
    for i in n.saturating_sub(14)..n {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.3}"));
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            rts.days[i],
            series.date(rts.days[i]),
            fmt(rts.mean[i]),
            fmt(rts.ma5[i]),
            u8::from(rts.sig_above_1[i])
        ));
    }
    out.write("summary.txt", &text)?;
    let mut all_inputs: Vec<(&str, &Path)> = input_list(cfg);
    all_inputs.extend(inputs.iter().map(|(l, p)| (*l, p.as_path())));
    out.write_manifest("rt", cfg, &all_inputs)
}

fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.simulate;
    let first = GrowthParams::new(cfg.growth, s.r, s.k, s.a)?;
    let cases = match s.kappa {
        None => CaseGrowth::Single(first),
        Some(kappa) => {
            let second = GrowthParams::new(cfg.growth, s.r_2, s.eta * s.k, s.a_2)?;
            CaseGrowth::Phased(PhasePlan::two_phase(first, second, kappa)?)
        }
    };
    let error = s.error_spec(cfg.family);
    let mut spec = SimSpec::new(cases, error, s.days, s.c1, cfg.seed);
    spec.origin = NaiveDate::parse_from_str(&s.origin, "%Y-%m-%d")
        .map_err(|e| CliError::Config(format!("simulate.origin '{}': {e}", s.origin)))?;
    spec.deterministic = s.deterministic;
    if s.deaths {
        spec = spec.with_deaths(DeathSpec { phi: s.phi, r: s.r_d, a: s.a_d, d1: s.d1, error });
    }
    let series = simulate_epidemic(&spec)?;
    let mut out = RunDir::create(&cfg.out)?;
    out.write("series.csv", &series.to_csv())?;
    let text = format!(
        "Simulated {} days from {}, {} error (hyperparameter {}), seed {}\nfinal cases {} deaths {}\n",
        series.len(),
        spec.origin,
        cfg.family,
        error.hyper(),
        cfg.seed,
        series.cum_cases().last().copied().unwrap_or(0),
        series.cum_deaths().last().copied().unwrap_or(0)
    );
    finish(&mut out, cfg, "simulate", &text, None)
}
