//! Overdispersion on top of the Poisson: multiplicative day effects
//! `eps_t` with gamma, lognormal or log-Student distributions.
//!
//! Inside the sampler the latent is carried on the log scale, `u_t = log eps_t`,
//! for all three families; [`log_latent_density`] is the density of `u_t`
//! and [`log_effect_prior`] the density of `eps_t` itself.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Default Student degrees of freedom for the log-Student family.
pub const DEFAULT_NU: f64 = 4.0;

/// Which mixing density multiplies the Poisson rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorFamily {
    /// Poisson-gamma (negative binomial).
    Pg,
    /// Poisson-lognormal.
    Pln,
    /// Poisson-log-Student.
    Pls,
}

impl ErrorFamily {
    pub fn label(self) -> &'static str {
        match self {
            ErrorFamily::Pg => "pg",
            ErrorFamily::Pln => "pln",
            ErrorFamily::Pls => "pls",
        }
    }

    /// Builds a spec from the family's hyperparameter: `lambda` for PG,
    /// the precision `1 / sigma^2` for PLN and PLS.
    pub fn spec(self, hyper: f64, nu: f64) -> ErrorSpec {
        match self {
            ErrorFamily::Pg => ErrorSpec::PoissonGamma { lambda: hyper },
            ErrorFamily::Pln => ErrorSpec::PoissonLognormal { sigma: hyper.recip().sqrt() },
            ErrorFamily::Pls => ErrorSpec::PoissonLogStudent { sigma: hyper.recip().sqrt(), nu },
        }
    }
}

impl ErrorFamily {
    /// Hyperparameter giving an effect variance of roughly `v`.
    pub fn hyper_from_overdispersion(self, v: f64) -> f64 {
        match self {
            ErrorFamily::Pg => 1.0 / v,
            ErrorFamily::Pln | ErrorFamily::Pls => 1.0 / v.ln_1p(),
        }
    }
}

impl std::fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ErrorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pg" | "poisson-gamma" => Ok(ErrorFamily::Pg),
            "pln" | "poisson-lognormal" => Ok(ErrorFamily::Pln),
            "pls" | "poisson-logstudent" => Ok(ErrorFamily::Pls),
            other => Err(Error::Argument(format!("unknown error family '{other}' (pg|pln|pls)"))),
        }
    }
}

/// Error family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ErrorSpec {
    /// `eps ~ Gamma(lambda, lambda)`, mean 1, overdispersion `1 / lambda`.
    #[serde(rename = "pg")]
    PoissonGamma { lambda: f64 },
    /// `log eps ~ Normal(0, sigma^2)`.
    #[serde(rename = "pln")]
    PoissonLognormal { sigma: f64 },
    /// `log eps ~ Student-t(0, sigma^2, nu)`.
    #[serde(rename = "pls")]
    PoissonLogStudent { sigma: f64, nu: f64 },
}

impl ErrorSpec {
    pub fn family(&self) -> ErrorFamily {
        match self {
            ErrorSpec::PoissonGamma { .. } => ErrorFamily::Pg,
            ErrorSpec::PoissonLognormal { .. } => ErrorFamily::Pln,
            ErrorSpec::PoissonLogStudent { .. } => ErrorFamily::Pls,
        }
    }

    /// `lambda` for PG, precision `1 / sigma^2` otherwise.
    pub fn hyper(&self) -> f64 {
        match *self {
            ErrorSpec::PoissonGamma { lambda } => lambda,
            ErrorSpec::PoissonLognormal { sigma } | ErrorSpec::PoissonLogStudent { sigma, .. } => {
                1.0 / (sigma * sigma)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ErrorSpec::PoissonGamma { lambda } => lambda > 0.0 && lambda.is_finite(),
            ErrorSpec::PoissonLognormal { sigma } => sigma > 0.0 && sigma.is_finite(),
            ErrorSpec::PoissonLogStudent { sigma, nu } => {
                sigma > 0.0 && sigma.is_finite() && nu > 2.0 && nu.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid error specification {self:?}")))
        }
    }

    /// Draws one multiplicative effect `eps`.
    pub fn sample_effect<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ErrorSpec::PoissonGamma { lambda } => gamma_draw(lambda, lambda, rng),
            ErrorSpec::PoissonLognormal { sigma } => {
                (sigma * Normal::new(0.0, 1.0).unwrap().sample(rng)).exp()
            }
            ErrorSpec::PoissonLogStudent { sigma, nu } => {
                let w = gamma_draw(nu / 2.0, nu / 2.0, rng);
                (sigma / w.sqrt() * Normal::new(0.0, 1.0).unwrap().sample(rng)).exp()
            }
        }
    }
}

/// Draws from `Gamma(shape, rate)`.
pub(crate) fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters validated by caller")
        .sample(rng)
}

/// `log Gamma(x; shape, rate)` with the rate parameterization.
#[inline]
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// `log Normal(x; 0, var)`.
#[inline]
pub fn ln_normal_pdf(x: f64, var: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * x * x / var
}

/// `log n!`, exact summation for small `n`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else if n < 32 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Poisson log-pmf with a precomputed `log y!`. `rate` must be positive.
#[inline]
pub fn poisson_lpmf_with(y: u64, rate: f64, ln_fact: f64) -> f64 {
    if y == 0 {
        -rate
    } else {
        y as f64 * rate.ln() - rate - ln_fact
    }
}

/// Log density of the latent `u = log eps` (Jacobian of `eps = e^u` included).
///
/// `mix` is the Student scale-mixture precision multiplier and is only read
/// for the log-Student family.
#[inline]
pub fn log_latent_density(spec: &ErrorSpec, u: f64, mix: f64) -> f64 {
    match *spec {
        ErrorSpec::PoissonGamma { lambda } => {
            lambda * lambda.ln() - ln_gamma(lambda) + lambda * u - lambda * u.exp()
        }
        ErrorSpec::PoissonLognormal { sigma } => ln_normal_pdf(u, sigma * sigma),
        ErrorSpec::PoissonLogStudent { sigma, nu } => {
            ln_normal_pdf(u, sigma * sigma / mix) + ln_gamma_pdf(mix, nu / 2.0, nu / 2.0)
        }
    }
}

/// Log prior density of a multiplicative effect `eps_t`.
///
/// For the log-Student family the joint density with its mixture scale is
/// returned, so `mix_scale` must be given exactly when the spec is PLS.
pub fn log_effect_prior(spec: &ErrorSpec, eps: f64, mix_scale: Option<f64>) -> Result<f64> {
    spec.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("effect must be positive, got {eps}")));
    }
    let mix = match (spec, mix_scale) {
        (ErrorSpec::PoissonLogStudent { .. }, Some(w)) if w > 0.0 => w,
        (ErrorSpec::PoissonLogStudent { .. }, Some(w)) => {
            return Err(Error::Domain(format!("mixture scale must be positive, got {w}")))
        }
        (ErrorSpec::PoissonLogStudent { .. }, None) => {
            return Err(Error::Argument("log-Student effects need a mixture scale".into()))
        }
        (_, Some(_)) => {
            return Err(Error::Argument("mixture scale only applies to the log-Student family".into()))
        }
        (_, None) => 1.0,
    };
    let u = eps.ln();
    Ok(log_latent_density(spec, u, mix) - u)
}

/// Poisson log-likelihood of `count` at rate `mu_det * eps`.
pub fn log_obs(count: u64, mu_det: f64, eps: f64) -> Result<f64> {
    let rate = mu_det * eps;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Domain(format!("Poisson rate must be positive, got {rate}")));
    }
    Ok(poisson_lpmf_with(count, rate, ln_factorial(count)))
}

/// Negative-binomial log-pmf with mean `mu` and variance `mu + mu^2 / lambda`,
/// the closed-form marginal of the Poisson-gamma mixture.
pub fn nb_marginal_logpmf(count: u64, mu: f64, lambda: f64) -> Result<f64> {
    if !(mu > 0.0) || !(lambda > 0.0) || !mu.is_finite() || !lambda.is_finite() {
        return Err(Error::Domain(format!("need mu > 0 and lambda > 0 (mu = {mu}, lambda = {lambda})")));
    }
    let y = count as f64;
    // log Gamma(y + lambda) - log Gamma(lambda), summed directly when short
    // to avoid cancellation at large lambda.
    let rising = if count <= 64 {
        (0..count).map(|k| (lambda + k as f64).ln()).sum::<f64>()
    } else {
        ln_gamma(y + lambda) - ln_gamma(lambda)
    };
    let log_p_zero = -lambda * (mu / lambda).ln_1p();
    let log_odds = if count == 0 { 0.0 } else { y * (mu / (lambda + mu)).ln() };
    Ok(rising - ln_factorial(count) + log_p_zero + log_odds)
}

/// Gibbs draw of the Student mixture precision multiplier given the latent
/// `u_t`: `Gamma((nu + 1) / 2, (nu + u^2 / sigma^2) / 2)`.
pub fn update_student_mix_scale<R: Rng + ?Sized>(u: f64, sigma: f64, nu: f64, rng: &mut R) -> f64 {
    let (shape, rate) = student_mix_conditional(u, sigma, nu);
    gamma_draw(shape, rate, rng)
}

/// Shape and rate of the mixture-scale full conditional.
pub fn student_mix_conditional(u: f64, sigma: f64, nu: f64) -> (f64, f64) {
    ((nu + 1.0) / 2.0, (nu + u * u / (sigma * sigma)) / 2.0)
}

/// Log density of a Student-t(0, sigma^2, nu) variate.
pub fn ln_student_pdf(x: f64, sigma: f64, nu: f64) -> f64 {
    let z = x / sigma;
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * PI).ln()
        - sigma.ln()
        - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn effect_prior_examples() {
        let pg = ErrorSpec::PoissonGamma { lambda: 1.0 };
        assert!((log_effect_prior(&pg, 1.0, None).unwrap() + 1.0).abs() < 1e-12);
        let pln = ErrorSpec::PoissonLognormal { sigma: 1.0 };
        assert!((log_effect_prior(&pln, 1.0, None).unwrap() + 0.918_938_533_2).abs() < 1e-9);
        let pls = ErrorSpec::PoissonLogStudent { sigma: 1.0, nu: 4.0 };
        // mix = 1 leaves the lognormal part unchanged; the remainder is the
        // mixture-scale density Gamma(1; 2, 2).
        let with_mix = log_effect_prior(&pls, 1.7, Some(1.0)).unwrap();
        let plain = log_effect_prior(&pln, 1.7, None).unwrap();
        assert!((with_mix - plain - ln_gamma_pdf(1.0, 2.0, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn effect_prior_domain() {
        let pg = ErrorSpec::PoissonGamma { lambda: 1.0 };
        assert!(log_effect_prior(&pg, 0.0, None).is_err());
        assert!(log_effect_prior(&pg, 1.0, Some(1.0)).is_err());
        let pls = ErrorSpec::PoissonLogStudent { sigma: 1.0, nu: 4.0 };
        assert!(log_effect_prior(&pls, 1.0, None).is_err());
        let bad = ErrorSpec::PoissonLogStudent { sigma: 1.0, nu: 2.0 };
        assert!(log_effect_prior(&bad, 1.0, Some(1.0)).is_err());
    }

    #[test]
    fn poisson_examples() {
        assert!((log_obs(0, 1.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!((log_obs(2, 2.0, 1.0).unwrap() - (2f64.ln() - 2.0)).abs() < 1e-14);
        assert!(log_obs(10, 0.0, 1.0).is_err());
        assert!(log_obs(10, 1.0, -1.0).is_err());
    }

    #[test]
    fn nb_examples() {
        assert!((nb_marginal_logpmf(0, 1.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-14);
        for &(y, mu) in &[(0u64, 3.0), (4, 3.0), (120, 100.0)] {
            let nb = nb_marginal_logpmf(y, mu, 1e8).unwrap();
            let pois = log_obs(y, mu, 1.0).unwrap();
            assert!((nb - pois).abs() < 1e-5, "{y} {mu}: {nb} vs {pois}");
        }
        assert!(nb_marginal_logpmf(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn large_counts_stay_finite() {
        for &y in &[0u64, 1, 1_000, 10_000_000] {
            for &rate in &[1e-3, 1.0, 1e7] {
                assert!(log_obs(y, rate, 1.0).unwrap().is_finite());
                assert!(nb_marginal_logpmf(y, rate, 0.5).unwrap().is_finite());
                assert!(nb_marginal_logpmf(y, rate, 1e7).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn mix_conditional_examples() {
        assert_eq!(student_mix_conditional(2.0, 1.0, 4.0), (2.5, 4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mean = (0..n).map(|_| update_student_mix_scale(0.0, 1.3, 4.0, &mut rng)).sum::<f64>() / n as f64;
        // Gamma(2.5, 2) has mean 1.25 and sd ~0.79.
        assert!((mean - 1.25).abs() < 4.0 * 0.79 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn pg_effects_have_unit_mean() {
        let spec = ErrorSpec::PoissonGamma { lambda: 2.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean = (0..n).map(|_| spec.sample_effect(&mut rng)).sum::<f64>() / n as f64;
        let se = (1.0 / 2.5f64).sqrt() / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn student_density_normalizes() {
        // Trapezoid over a wide range.
        let h = 1e-3;
        let total: f64 = (-200_000..=200_000).map(|i| ln_student_pdf(i as f64 * h, 0.7, 4.0).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn family_parsing_and_specs() {
        assert_eq!("PLS".parse::<ErrorFamily>().unwrap(), ErrorFamily::Pls);
        assert!("nb".parse::<ErrorFamily>().is_err());
        let s = ErrorFamily::Pln.spec(4.0, DEFAULT_NU);
        assert_eq!(s, ErrorSpec::PoissonLognormal { sigma: 0.5 });
        assert!((s.hyper() - 4.0).abs() < 1e-12);
    }
}
