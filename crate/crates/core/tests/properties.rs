use chrono::NaiveDate;
use proptest::prelude::*;

use epiforecast::data::{build_series, moving_average, parse_csv, ColumnSchema, EpidemicSeries, NegativePolicy, RawRecord};
use epiforecast::errmodel::{log_obs, ErrorFamily};
use epiforecast::forecast::{crossval, ForecastPath, PathOutcome};
use epiforecast::growth::{default_spacing, k_point_estimate, richards_cumulative, Family, GrowthParams};
use epiforecast::mcmc::Model;
use epiforecast::multiphase::{multiphase_mean, MultiphaseConfig, MultiphaseModel, PhasePlan};
use epiforecast::prior::{cfr_beta_prior, k_prior_from_series, ln_exponential_pdf, GammaPrior, ThetaBivariate};
use epiforecast::rtestim::{discretize_si, effective_r, GammaSI};

fn origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn series_csv_round_trip(
        counts in prop::collection::vec((0u64..5000, 0u64..300), 3..60),
    ) {
        let mut cases: Vec<u64> = counts.iter().map(|c| c.0).collect();
        cases[0] = cases[0].max(1);
        let deaths: Vec<u64> = counts.iter().map(|c| c.1).collect();
        let series = EpidemicSeries::from_counts(origin(), cases.clone(), deaths.clone()).unwrap();
        let back = EpidemicSeries::from_csv(&series.to_csv()).unwrap();
        prop_assert_eq!(back.cases(), &cases[..]);
        prop_assert_eq!(back.deaths(), &deaths[..]);
        prop_assert_eq!(back.origin(), origin());
        let records = parse_csv(&series.to_csv(), &ColumnSchema::series(), None).unwrap();
        prop_assert_eq!(build_series(&records, NegativePolicy::Error).unwrap(), series);
    }

    #[test]
    fn cumulatives_difference_to_daily(
        mut raw in prop::collection::vec((-20i64..2000, -5i64..100), 3..60),
    ) {
        raw[0].0 = raw[0].0.max(1);
        let records: Vec<RawRecord> = raw
            .iter()
            .enumerate()
            .map(|(i, &(c, d))| RawRecord {
                date: origin() + chrono::Duration::days(i as i64),
                new_cases: c,
                new_deaths: d,
                region: String::new(),
            })
            .collect();
        let s = build_series(&records, NegativePolicy::ClampZero).unwrap();
        for t in 0..s.len() {
            let prev = if t == 0 { 0 } else { s.cum_cases()[t - 1] };
            prop_assert_eq!(s.cum_cases()[t] - prev, s.cases()[t]);
            let prev = if t == 0 { 0 } else { s.cum_deaths()[t - 1] };
            prop_assert_eq!(s.cum_deaths()[t] - prev, s.deaths()[t]);
            prop_assert_eq!(s.cases()[t], raw[t].0.max(0) as u64);
        }
    }

    #[test]
    fn moving_average_of_constant(v in -1e6f64..1e6, extra in 0usize..40, half in 0usize..8) {
        let out = moving_average(&vec![v; 2 * half + 1 + extra], 2 * half + 1).unwrap();
        for x in out {
            prop_assert!((x - v).abs() <= 1e-9 * v.abs().max(1.0));
        }
    }

    #[test]
    fn richards_unit_shape_is_logistic(r in 0.01f64..2.0, k in 10.0f64..1e8, frac in 0.0f64..1.2, t in 0.0f64..300.0) {
        let rich = GrowthParams::richards(r, k, 1.0).unwrap();
        let logi = GrowthParams::logistic(r, k).unwrap();
        let c = frac * k;
        prop_assert!((rich.rate(c) - logi.rate(c)).abs() <= 1e-12 * (r * k));
        let closed_r = richards_cumulative(&rich, t, 100.0).unwrap();
        let closed_l = richards_cumulative(&logi, t, 100.0).unwrap();
        prop_assert!((closed_r - closed_l).abs() <= 1e-12 * k);
    }

    #[test]
    fn mean_is_nonnegative_and_vanishes_at_k(
        r in 0.01f64..2.0,
        k in 10.0f64..1e8,
        a in 0.05f64..5.0,
        frac in 0.0001f64..1.0,
        family in prop::sample::select(vec![Family::Logistic, Family::Richards, Family::Gompertz]),
    ) {
        let g = GrowthParams::new(family, r, k, a).unwrap();
        prop_assert!(g.mean_incidence(frac * k).unwrap() >= 0.0);
        prop_assert_eq!(g.mean_incidence(k).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_is_monotone_and_matches_recursion(
        r in 0.02f64..0.5,
        k in 1e3f64..1e7,
        a in 0.2f64..3.0,
        tau in 20.0f64..80.0,
    ) {
        let g = GrowthParams::richards(r, k, a).unwrap();
        let mut prev = richards_cumulative(&g, 0.0, tau).unwrap();
        for t in 1..=150 {
            let c = richards_cumulative(&g, t as f64, tau).unwrap();
            prop_assert!(c >= prev);
            let h = 1e-4;
            let slope = (richards_cumulative(&g, t as f64 + h, tau).unwrap()
                - richards_cumulative(&g, t as f64 - h, tau).unwrap())
                / (2.0 * h);
            // The closed form runs on the time scale r / a.
            let ode = g.rate(c) / a;
            prop_assert!((slope - ode).abs() <= 1e-4 * ode.max(1e-6 * k), "t {t}: slope {slope} vs rate {ode}");
            prev = c;
        }
    }

    #[test]
    fn k_estimate_is_scale_equivariant(
        r in 0.05f64..0.3,
        k in 1e3f64..1e6,
        tau in 30.0f64..70.0,
        s in 0.01f64..100.0,
    ) {
        let cum: Vec<f64> = (1..=100).map(|t| k / (1.0 + (-r * (t as f64 - tau)).exp())).collect();
        let scaled: Vec<f64> = cum.iter().map(|c| c * s).collect();
        let m = default_spacing(100);
        match (k_point_estimate(&cum, 100, m), k_point_estimate(&scaled, 100, m)) {
            (Ok(a), Ok(b)) => prop_assert!((b - s * a).abs() <= 1e-9 * s * a),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "inconsistent results {a:?} {b:?}"),
        }
    }

    #[test]
    fn beta_prior_mean_is_reference(phi in 0.001f64..0.999, count in 0.01f64..1e4) {
        let b = cfr_beta_prior(phi, count).unwrap();
        prop_assert!((b.mean() - phi).abs() < 1e-12);
    }

    #[test]
    fn death_final_size_below_case_final_size(phi in 0.0001f64..0.9999, k in 1.0f64..1e9) {
        let theta = ThetaBivariate {
            r_c: 0.1, r_d: 0.1, a_c: 1.0, a_d: 1.0, k_c: k, phi,
            err_c: ErrorFamily::Pg.spec(10.0, 4.0),
            err_d: ErrorFamily::Pg.spec(10.0, 4.0),
        };
        prop_assert!(theta.k_d() < theta.k_c);
    }

    #[test]
    fn rt_is_scale_invariant(
        base in prop::collection::vec(1.0f64..1e4, 30..60),
        s in 1e-3f64..1e3,
    ) {
        let si = discretize_si(&GammaSI::default(), 16, true).unwrap();
        let a = effective_r(std::slice::from_ref(&base), &si).unwrap();
        let scaled: Vec<f64> = base.iter().map(|c| c * s).collect();
        let b = effective_r(&[scaled], &si).unwrap();
        for (x, y) in a.mean.iter().zip(&b.mean) {
            let (x, y) = (x.unwrap(), y.unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn si_weights_are_a_distribution(
        mean in 0.5f64..15.0,
        cv in 0.05f64..2.0,
        lag in 1usize..40,
        same_day: bool,
    ) {
        let g = GammaSI::new(1.0 / (cv * cv), 1.0 / (cv * cv * mean)).unwrap();
        if let Ok(si) = discretize_si(&g, lag, same_day) {
            prop_assert!(si.weights().iter().all(|&w| w >= 0.0));
            prop_assert!((si.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_monotone_under_upward_shift(
        paths in prop::collection::vec(prop::collection::vec(0u64..500, 5), 10..40),
        actual in prop::collection::vec(0u64..500, 5),
        shift in 0u64..200,
    ) {
        let names = vec!["cases".to_string()];
        let build = |add: u64| -> Vec<ForecastPath> {
            paths
                .iter()
                .enumerate()
                .map(|(id, p)| path(id, p.iter().map(|y| y + add).collect()))
                .collect()
        };
        let before = crossval(&build(0), &[&actual], &names).unwrap().omega_c().unwrap();
        let after = crossval(&build(shift), &[&actual], &names).unwrap().omega_c().unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn omega_ignores_draw_and_day_order(
        paths in prop::collection::vec(prop::collection::vec(0u64..500, 6), 10..40),
        actual in prop::collection::vec(0u64..500, 6),
        rotate in 0usize..6,
    ) {
        let names = vec!["cases".to_string()];
        let forward: Vec<ForecastPath> = paths.iter().enumerate().map(|(i, p)| path(i, p.clone())).collect();
        let reordered: Vec<ForecastPath> = paths
            .iter()
            .rev()
            .enumerate()
            .map(|(i, p)| {
                let mut p = p.clone();
                p.rotate_left(rotate);
                path(i, p)
            })
            .collect();
        let mut actual_rot = actual.clone();
        actual_rot.rotate_left(rotate);
        let a = crossval(&forward, &[&actual], &names).unwrap().omega_c().unwrap();
        let b = crossval(&reordered, &[&actual_rot], &names).unwrap().omega_c().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn multiphase_mean_constant_within_phase(
        r1 in 0.05f64..0.5, r2 in 0.01f64..0.5,
        k in 1e4f64..1e6, eta in 1.0f64..3.0,
        kappa in 10.0f64..90.0,
        frac in 0.01f64..0.9,
        t1 in 1usize..100, t2 in 1usize..100,
    ) {
        let p1 = GrowthParams::richards(r1, k, 0.7).unwrap();
        let p2 = GrowthParams::richards(r2, eta * k, 1.3).unwrap();
        let plan = PhasePlan::two_phase(p1, p2, kappa).unwrap();
        let c = frac * k;
        let phase = |t: usize| (t as f64 >= kappa) as usize;
        if phase(t1) == phase(t2) {
            prop_assert_eq!(multiphase_mean(&plan, c, t1).unwrap(), multiphase_mean(&plan, c, t2).unwrap());
        }
        let single = if phase(t1) == 0 { p1 } else { p2 };
        prop_assert_eq!(multiphase_mean(&plan, c, t1).unwrap(), single.mean_incidence(c).unwrap());
    }
}

fn path(id: usize, new: Vec<u64>) -> ForecastPath {
    let mut c = 0.0;
    let cum = new.iter().map(|&y| {
        c += y as f64;
        c
    }).collect();
    ForecastPath { draw_id: id, outcomes: vec![PathOutcome { new, cum }] }
}

fn logistic_series() -> EpidemicSeries {
    let k = 50_000.0;
    let cum: Vec<u64> = (1..=90).map(|t| (k / (1.0 + (-0.12 * (t as f64 - 55.0)).exp())).round() as u64 + 1).collect();
    let mut daily = vec![cum[0]];
    daily.extend(cum.windows(2).map(|w| w[1] - w[0]));
    EpidemicSeries::from_counts(origin(), daily, vec![0; 90]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // With identical phases and eta = 1 the two-phase posterior is the
    // single-phase one plus the second-phase prior terms.
    #[test]
    fn degenerate_two_phase_equals_single_phase(
        r in 0.01f64..1.0,
        a in 0.1f64..3.0,
        k_over in 1.05f64..20.0,
        kappa in 1.0f64..200.0,
        h in 0.1f64..50.0,
        eps in prop::collection::vec(0.5f64..2.0, 89),
    ) {
        let series = logistic_series();
        let t_max = 90;
        let cfg = MultiphaseConfig { error: ErrorFamily::Pg, ..Default::default() };
        let model = MultiphaseModel::new(&series, t_max, &cfg).unwrap();
        let cum: Vec<f64> = series.cum_cases().iter().map(|&c| c as f64).collect();
        let k = k_over * cum[t_max - 1];
        let theta = [r, a, k, r, a, 1.0, kappa, h];

        let single = GrowthParams::richards(r, k, a).unwrap();
        let k_prior = k_prior_from_series(&cum, t_max, default_spacing(t_max), 1.0).unwrap();
        let single_prior = ln_exponential_pdf(r, 1.0)
            + ln_exponential_pdf(a, 1.0)
            + k_prior.ln_pdf(k)
            + GammaPrior { shape: 1.0, rate: 0.001 }.ln_pdf(h);
        let extra = ln_exponential_pdf(r, 1.0)
            + ln_exponential_pdf(a, 1.0)
            + ln_exponential_pdf(1.0, 1.0)
            + ln_exponential_pdf(kappa, 150.0);

        let mut mu = vec![0.0; t_max - 1];
        prop_assert!(model.mean_det(&theta, 0, &mut mu));
        let mut ll_multi = 0.0;
        let mut ll_single = 0.0;
        for (i, t) in (2..=t_max).enumerate() {
            let y = series.cases()[t - 1];
            ll_multi += log_obs(y, mu[i], eps[i]).unwrap();
            ll_single += log_obs(y, single.rate(cum[t - 2]), eps[i]).unwrap();
        }
        let spec = model.error_spec(&theta, 0);
        prop_assert_eq!(spec, ErrorFamily::Pg.spec(h, 4.0));
        let multi = model.log_prior(&theta) + ll_multi;
        let reference = single_prior + extra + ll_single;
        prop_assert!((multi - reference).abs() <= 1e-9 * reference.abs().max(1.0), "{multi} vs {reference}");
    }
}
