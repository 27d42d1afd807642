//! Monte Carlo checks of the error families, serial-interval helpers and
//! the simulator against their analytic moments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use epiforecast::errmodel::{log_effect_prior, log_obs, nb_marginal_logpmf, ErrorFamily, ErrorSpec};
use epiforecast::growth::GrowthParams;
use epiforecast::rtestim::{gamma_from_mean_sd, pool_si, GammaSI};
use epiforecast::simulate::{simulate_epidemic, CaseGrowth, SimSpec};

const N: usize = 1_000_000;

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn gamma_effect_has_unit_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for lambda in [0.5, 2.0, 10.0, 100.0] {
        let spec = ErrorSpec::PoissonGamma { lambda };
        let xs: Vec<f64> = (0..N).map(|_| spec.sample_effect(&mut rng)).collect();
        let (m, sd) = mean_sd(&xs);
        let se = sd / (N as f64).sqrt();
        assert!((m - 1.0).abs() < 4.0 * se, "lambda {lambda}: mean {m}, se {se}");
    }
}

#[test]
fn averaging_over_gamma_effects_gives_negative_binomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for &lambda in &[0.8, 5.0] {
        let spec = ErrorSpec::PoissonGamma { lambda };
        let eps: Vec<f64> = (0..N).map(|_| spec.sample_effect(&mut rng)).collect();
        for &mu in &[0.7, 12.0, 150.0] {
            for &count in &[0u64, 3, 15, 160] {
                let probs: Vec<f64> = eps.iter().map(|&e| log_obs(count, mu, e).unwrap().exp()).collect();
                let (m, sd) = mean_sd(&probs);
                let exact = nb_marginal_logpmf(count, mu, lambda).unwrap().exp();
                let tol = 4.0 * sd / (N as f64).sqrt() + 1e-12;
                assert!((m - exact).abs() < tol, "y {count} mu {mu} lambda {lambda}: {m} vs {exact}");
            }
        }
    }
}

#[test]
fn log_student_effect_has_doubled_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for sigma in [0.3, 1.0] {
        let spec = ErrorSpec::PoissonLogStudent { sigma, nu: 4.0 };
        let us: Vec<f64> = (0..4 * N).map(|_| spec.sample_effect(&mut rng).ln()).collect();
        let (_, sd) = mean_sd(&us);
        let target = 2.0 * sigma * sigma;
        assert!((sd * sd / target - 1.0).abs() < 0.02, "sigma {sigma}: var {} vs {target}", sd * sd);
    }
}

#[test]
fn densities_stay_finite_for_large_counts() {
    for count in [0u64, 1, 1_000, 10_000_000] {
        for rate in [1e-3, 1.0, 1e4, 1e7] {
            assert!(log_obs(count, rate, 1.0).unwrap().is_finite());
            for lambda in [1e-3, 1.0, 1e8] {
                assert!(nb_marginal_logpmf(count, rate, lambda).unwrap().is_finite());
            }
        }
    }
    for family in [ErrorFamily::Pg, ErrorFamily::Pln, ErrorFamily::Pls] {
        let spec = family.spec(50.0, 4.0);
        let mix = (family == ErrorFamily::Pls).then_some(1.0);
        for eps in [1e-8, 1.0, 1e7] {
            assert!(log_effect_prior(&spec, eps, mix).unwrap().is_finite());
        }
    }
}

// The gap is about ((y - mu)^2 - y) / (2 lambda), so counts stay moderate.
#[test]
fn negative_binomial_approaches_poisson() {
    for (count, mu) in [(0u64, 1.0), (4, 2.5), (120, 100.0), (800, 790.0)] {
        let nb = nb_marginal_logpmf(count, mu, 1e8).unwrap();
        let pois = log_obs(count, mu, 1.0).unwrap();
        assert!((nb - pois).abs() < 1e-5, "y {count}: {nb} vs {pois}");
    }
}

#[test]
fn moment_matched_gamma_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for (mean, sd) in [(3.5, 3.1), (5.0, 1.0), (1.2, 2.4)] {
        let g = gamma_from_mean_sd(mean, sd).unwrap();
        let dist = Gamma::new(g.shape, 1.0 / g.rate).unwrap();
        let xs: Vec<f64> = (0..N).map(|_| dist.sample(&mut rng)).collect();
        let (m, s) = mean_sd(&xs);
        assert!((m - mean).abs() < 4.0 * sd / (N as f64).sqrt(), "mean {m} vs {mean}");
        assert!((s / sd - 1.0).abs() < 0.01, "sd {s} vs {sd}");
    }
}

#[test]
fn pooling_one_or_two_copies_recovers_the_component() {
    let g = GammaSI::new(1.38, 0.36).unwrap();
    let one = pool_si(&[g], N, 1).unwrap();
    let two = pool_si(&[g, g], N, 2).unwrap();
    for pooled in [one, two] {
        assert!((pooled.shape / g.shape - 1.0).abs() < 0.02, "{pooled:?}");
        assert!((pooled.rate / g.rate - 1.0).abs() < 0.02, "{pooled:?}");
    }
}

fn richards() -> GrowthParams {
    GrowthParams::richards(0.25, 200_000.0, 0.5).unwrap()
}

// E[c_t | C_{t-1}] = mu_t E[eps]; for the lognormal effect E[eps] = exp(sigma^2 / 2).
#[test]
fn simulated_counts_match_conditional_mean() {
    let g = richards();
    let day = 30;
    for (spec, mean_eps) in [
        (ErrorSpec::PoissonGamma { lambda: 10.0 }, 1.0),
        (ErrorSpec::PoissonLognormal { sigma: 0.3 }, (0.045f64).exp()),
    ] {
        let ratios: Vec<f64> = (0..4000)
            .map(|seed| {
                let s = simulate_epidemic(&SimSpec::new(CaseGrowth::Single(g), spec, day, 10, seed)).unwrap();
                let prev = s.cum_cases()[day - 2] as f64;
                s.cases()[day - 1] as f64 / g.rate(prev)
            })
            .collect();
        let (m, sd) = mean_sd(&ratios);
        let se = sd / (ratios.len() as f64).sqrt();
        assert!((m - mean_eps).abs() < 4.0 * se, "{spec:?}: {m} vs {mean_eps} (se {se})");
    }
}

// Pearson residuals (c - mu)^2 / (mu (1 + mu / lambda)) average to one.
#[test]
fn simulated_overdispersion_index_matches_gamma_effect() {
    let g = richards();
    let lambda = 10.0;
    let mut scaled = Vec::new();
    for seed in 0..100 {
        let spec = SimSpec::new(CaseGrowth::Single(g), ErrorSpec::PoissonGamma { lambda }, 120, 10, seed);
        let s = simulate_epidemic(&spec).unwrap();
        for t in 2..=120 {
            let mu = g.rate(s.cum_cases()[t - 2] as f64);
            if mu >= 1.0 {
                let y = s.cases()[t - 1] as f64;
                scaled.push((y - mu).powi(2) / (mu * (1.0 + mu / lambda)));
            }
        }
    }
    let (m, sd) = mean_sd(&scaled);
    let se = sd / (scaled.len() as f64).sqrt();
    assert!((m - 1.0).abs() < 4.0 * se, "index ratio {m} (se {se}, n {})", scaled.len());
}

// Log-Student effects are heavy tailed enough that one day can jump past K,
// so only the light-tailed families are held to the bound.
#[test]
fn simulated_final_size_respects_k() {
    let g = richards();
    for family in [ErrorFamily::Pg, ErrorFamily::Pln] {
        for seed in 0..20 {
            let spec = SimSpec::new(CaseGrowth::Single(g), family.spec(10.0, 4.0), 200, 10, seed);
            let s = simulate_epidemic(&spec).unwrap();
            let last = *s.cum_cases().last().unwrap() as f64;
            assert!(last <= 1.01 * g.k, "{family} seed {seed}: C_T = {last}");
        }
    }
}
