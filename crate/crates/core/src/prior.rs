//! Joint prior for the bivariate cases/deaths model.

use serde::{Deserialize, Serialize};
use statrs::function::{beta::ln_beta, erf::erf_inv};

use crate::errmodel::{ln_gamma_pdf, ErrorSpec, DEFAULT_NU};
use crate::error::{Error, Result};
use crate::growth::{default_spacing, k_point_estimate};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// How the final death total is tied to the final case total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KdLink {
    /// `K_d = Phi * K_c` with a Beta prior on `Phi`.
    #[default]
    Ratio,
    /// Independent lognormal prior on `K_d` centred at `log K_c^e + log phi_ref`
    /// (with `K_d < K_c` kept through the `Phi` parameterization).
    Lognormal,
}

/// User-facing prior settings. Every field has a default and can be
/// overridden from a configuration file or the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Mean of the exponential priors on growth rates and shape exponents.
    pub rate_prior_mean: f64,
    /// Log-mean of the lognormal prior on `K_c`; estimated from the series when absent.
    pub k_log_mean: Option<f64>,
    pub k_log_var: f64,
    /// Day at which the three-point estimator is anchored (defaults to the training end).
    pub k_anchor_day: Option<usize>,
    /// Spacing of the three-point estimator (defaults to first/middle/last day).
    pub k_spacing: Option<usize>,
    /// Reference case-fatality proportion.
    pub cfr_ref: f64,
    /// Prior count of the Beta prior on `Phi`.
    pub cfr_count: f64,
    /// Gamma hyperprior on `lambda` (PG) or the precision `1/sigma^2` (PLN/PLS).
    pub hyper_shape: f64,
    pub hyper_rate: f64,
    pub kd_link: KdLink,
    /// Student degrees of freedom for the log-Student family (fixed).
    pub nu: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            rate_prior_mean: 1.0,
            k_log_mean: None,
            k_log_var: 1.0,
            k_anchor_day: None,
            k_spacing: None,
            cfr_ref: 0.101,
            cfr_count: 5.0,
            hyper_shape: 1.0,
            hyper_rate: 0.001,
            kd_link: KdLink::Ratio,
            nu: DEFAULT_NU,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rate_prior_mean", self.rate_prior_mean)?;
        positive("k_log_var", self.k_log_var)?;
        positive("cfr_count", self.cfr_count)?;
        positive("hyper_shape", self.hyper_shape)?;
        positive("hyper_rate", self.hyper_rate)?;
        if !(self.cfr_ref > 0.0 && self.cfr_ref < 1.0) {
            return Err(Error::Config(format!("cfr_ref must lie in (0, 1), got {}", self.cfr_ref)));
        }
        if !(self.nu > 2.0) {
            return Err(Error::Config(format!("nu must exceed 2, got {}", self.nu)));
        }
        Ok(())
    }

    /// Fixes the data-dependent parts of the prior for a fit ending at `t_max`.
    pub fn resolve(&self, cum_cases: &[f64], t_max: usize) -> Result<JointPrior> {
        self.validate()?;
        let k = match self.k_log_mean {
            Some(mean) => LognormalPrior { log_mean: mean, log_var: self.k_log_var },
            None => {
                let t = self.k_anchor_day.unwrap_or(t_max).min(t_max);
                let m = self.k_spacing.unwrap_or_else(|| default_spacing(t));
                k_prior_from_series(cum_cases, t, m, self.k_log_var)?
            }
        };
        Ok(JointPrior {
            rate_mean: self.rate_prior_mean,
            k,
            cfr: cfr_beta_prior(self.cfr_ref, self.cfr_count)?,
            cfr_ref: self.cfr_ref,
            hyper: GammaPrior { shape: self.hyper_shape, rate: self.hyper_rate },
            kd_link: self.kd_link,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalPrior {
    pub log_mean: f64,
    pub log_var: f64,
}

impl LognormalPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = x.ln() - self.log_mean;
        -x.ln() - 0.5 * (LN_2PI + self.log_var.ln()) - z * z / (2.0 * self.log_var)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let z = std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0);
        (self.log_mean + z * self.log_var.sqrt()).exp()
    }

    pub fn median(&self) -> f64 {
        self.log_mean.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPrior {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (-x).ln_1p() - ln_beta(self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        ln_gamma_pdf(x, self.shape, self.rate)
    }
}

/// `log Exponential(x; mean)`.
pub fn ln_exponential_pdf(x: f64, mean: f64) -> f64 {
    -mean.ln() - x / mean
}

/// Lognormal prior for `K_c` centred on the three-point estimate at day `t`.
pub fn k_prior_from_series(cum: &[f64], t: usize, m: usize, log_var: f64) -> Result<LognormalPrior> {
    if !(log_var > 0.0) {
        return Err(Error::Argument(format!("log variance must be positive, got {log_var}")));
    }
    let k = k_point_estimate(cum, t, m)?;
    Ok(LognormalPrior { log_mean: k.ln(), log_var })
}

/// Beta prior on the fatality link with mean `phi_ref` and prior count `count`.
pub fn cfr_beta_prior(phi_ref: f64, count: f64) -> Result<BetaPrior> {
    if !(phi_ref > 0.0 && phi_ref < 1.0) {
        return Err(Error::Argument(format!("reference fatality ratio must lie in (0, 1), got {phi_ref}")));
    }
    if !(count > 0.0) || !count.is_finite() {
        return Err(Error::Argument(format!("prior count must be positive, got {count}")));
    }
    Ok(BetaPrior { alpha: count * phi_ref, beta: count * (1.0 - phi_ref) })
}

/// Parameters of the bivariate model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaBivariate {
    pub r_c: f64,
    pub r_d: f64,
    pub a_c: f64,
    pub a_d: f64,
    pub k_c: f64,
    /// Case-fatality link, `K_d = phi * K_c`.
    pub phi: f64,
    pub err_c: ErrorSpec,
    pub err_d: ErrorSpec,
}

impl ThetaBivariate {
    pub fn k_d(&self) -> f64 {
        self.phi * self.k_c
    }
}

/// A parameter outside the prior's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("support violation: {reason}")]
pub struct SupportViolation {
    pub reason: &'static str,
}

/// The prior with every data-dependent quantity fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointPrior {
    pub rate_mean: f64,
    pub k: LognormalPrior,
    pub cfr: BetaPrior,
    pub cfr_ref: f64,
    pub hyper: GammaPrior,
    pub kd_link: KdLink,
}

impl JointPrior {
    /// Component log densities in a fixed order.
    pub fn components(&self, theta: &ThetaBivariate) -> Result<Vec<(&'static str, f64)>, SupportViolation> {
        let pos = |v: f64, reason: &'static str| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(SupportViolation { reason })
            }
        };
        let r_c = pos(theta.r_c, "r_c must be positive")?;
        let r_d = pos(theta.r_d, "r_d must be positive")?;
        let a_c = pos(theta.a_c, "a_c must be positive")?;
        let a_d = pos(theta.a_d, "a_d must be positive")?;
        let k_c = pos(theta.k_c, "K_c must be positive")?;
        if !(theta.phi > 0.0 && theta.phi < 1.0) {
            return Err(SupportViolation { reason: "Phi must lie strictly inside (0, 1)" });
        }
        let h_c = pos(theta.err_c.hyper(), "case error hyperparameter must be positive")?;
        let h_d = pos(theta.err_d.hyper(), "death error hyperparameter must be positive")?;

        let link = match self.kd_link {
            KdLink::Ratio => ("phi", self.cfr.ln_pdf(theta.phi)),
            KdLink::Lognormal => {
                let kd_prior = LognormalPrior {
                    log_mean: self.k.log_mean + self.cfr_ref.ln(),
                    log_var: self.k.log_var,
                };
                // Density of Phi induced by a lognormal K_d at fixed K_c.
                ("k_d", kd_prior.ln_pdf(theta.k_d()) + k_c.ln())
            }
        };
        Ok(vec![
            ("r_c", ln_exponential_pdf(r_c, self.rate_mean)),
            ("r_d", ln_exponential_pdf(r_d, self.rate_mean)),
            ("a_c", ln_exponential_pdf(a_c, self.rate_mean)),
            ("a_d", ln_exponential_pdf(a_d, self.rate_mean)),
            ("k_c", self.k.ln_pdf(k_c)),
            link,
            ("hyper_c", self.hyper.ln_pdf(h_c)),
            ("hyper_d", self.hyper.ln_pdf(h_d)),
        ])
    }

    /// Joint log prior density of `theta`.
    pub fn log_prior(&self, theta: &ThetaBivariate) -> Result<f64, SupportViolation> {
        Ok(self.components(theta)?.iter().map(|(_, v)| v).sum())
    }
}

/// Convenience wrapper returning `-inf` outside the support.
pub fn log_prior(theta: &ThetaBivariate, prior: &JointPrior) -> f64 {
    prior.log_prior(theta).unwrap_or(f64::NEG_INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::richards_cumulative;
    use crate::growth::GrowthParams;

    fn prior() -> JointPrior {
        PriorConfig { k_log_mean: Some(250_000f64.ln()), ..Default::default() }
            .resolve(&[], 0)
            .unwrap()
    }

    fn theta() -> ThetaBivariate {
        ThetaBivariate {
            r_c: 1.0,
            r_d: 1.0,
            a_c: 1.0,
            a_d: 1.0,
            k_c: 250_000.0,
            phi: 0.1,
            err_c: ErrorSpec::PoissonGamma { lambda: 5.0 },
            err_d: ErrorSpec::PoissonLogStudent { sigma: 0.5, nu: 4.0 },
        }
    }

    #[test]
    fn k_prior_upper_percentile() {
        let p = LognormalPrior { log_mean: 250_000f64.ln(), log_var: 1.0 };
        let q = p.quantile(0.975);
        assert!((q - (250_000f64.ln() + 1.959_963_985).exp()).abs() < 1.0);
        assert!((1.7e6..1.8e6).contains(&q), "{q}");
    }

    #[test]
    fn k_prior_from_logistic_series() {
        let g = GrowthParams::logistic(0.2, 1000.0).unwrap();
        let cum: Vec<f64> = (1..=61).map(|t| richards_cumulative(&g, t as f64, 50.0).unwrap()).collect();
        let p = k_prior_from_series(&cum, 61, 30, 1.0).unwrap();
        assert!((p.log_mean - 1000f64.ln()).abs() < 1e-8);
        assert!(matches!(
            k_prior_from_series(&[3.0; 9], 9, 4, 1.0),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn cfr_prior_examples() {
        let b = cfr_beta_prior(0.101, 5.0).unwrap();
        assert!((b.alpha - 0.505).abs() < 1e-12 && (b.beta - 4.495).abs() < 1e-12);
        assert!((b.mean() - 0.101).abs() < 1e-12);
        assert_eq!(cfr_beta_prior(0.5, 2.0).unwrap(), BetaPrior { alpha: 1.0, beta: 1.0 });
        assert!(cfr_beta_prior(1.0, 2.0).is_err());
        assert!(cfr_beta_prior(0.2, 0.0).is_err());
    }

    #[test]
    fn exponential_at_mean() {
        assert!((ln_exponential_pdf(1.0, 1.0) + 1.0).abs() < 1e-15);
        let comps = prior().components(&theta()).unwrap();
        for name in ["r_c", "r_d", "a_c", "a_d"] {
            let v = comps.iter().find(|(n, _)| *n == name).unwrap().1;
            assert!((v + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_is_minus_infinity() {
        let mut t = theta();
        t.phi = 0.0;
        assert_eq!(log_prior(&t, &prior()), f64::NEG_INFINITY);
        assert!(prior().log_prior(&t).unwrap_err().reason.contains("Phi"));
        let mut t = theta();
        t.k_c = -1.0;
        assert_eq!(log_prior(&t, &prior()), f64::NEG_INFINITY);
    }

    #[test]
    fn full_prior_is_sum_of_independent_components() {
        let t = theta();
        let p = prior();
        let oracle = 4.0 * (-1.0)
            + (-(250_000f64.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln())
            + ((0.505 - 1.0) * 0.1f64.ln() + (4.495 - 1.0) * 0.9f64.ln() - ln_beta(0.505, 4.495))
            + (1.0f64 * 0.001f64.ln() - 0.001 * 5.0)
            + (0.001f64.ln() - 0.001 * 4.0);
        assert!((p.log_prior(&t).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn lognormal_kd_link_changes_only_link_term() {
        let t = theta();
        let ratio = prior();
        let ln = JointPrior { kd_link: KdLink::Lognormal, ..ratio };
        let a = ratio.components(&t).unwrap();
        let b = ln.components(&t).unwrap();
        for (x, y) in a.iter().zip(&b) {
            if x.0 != "phi" {
                assert_eq!(x.1, y.1);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(PriorConfig { cfr_ref: 1.2, ..Default::default() }.validate().is_err());
        assert!(PriorConfig { nu: 2.0, ..Default::default() }.validate().is_err());
        assert!(PriorConfig::default().validate().is_ok());
    }
}
