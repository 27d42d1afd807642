//! Phenomenological growth curves: incidence means, the closed-form
//! Richards cumulative curve, turning points and the three-point final-size
//! estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Growth-curve family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    #[default]
    Richards,
    Gompertz,
    Rosenzweig,
}

impl Family {
    /// Families whose incidence vanishes at `C = K` and is negative above it.
    pub fn is_bounded(self) -> bool {
        !matches!(self, Family::Rosenzweig)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Logistic => "logistic",
            Family::Richards => "richards",
            Family::Gompertz => "gompertz",
            Family::Rosenzweig => "rosenzweig",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(Family::Logistic),
            "richards" => Ok(Family::Richards),
            "gompertz" => Ok(Family::Gompertz),
            "rosenzweig" => Ok(Family::Rosenzweig),
            other => Err(Error::Argument(format!("unknown growth family '{other}'"))),
        }
    }
}

/// One growth-curve parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub family: Family,
    /// Growth intensity per day.
    pub r: f64,
    /// Final size.
    pub k: f64,
    /// Shape exponent (1 for logistic, ignored for Gompertz).
    pub a: f64,
}

impl GrowthParams {
    pub fn new(family: Family, r: f64, k: f64, a: f64) -> Result<Self> {
        let a = match family {
            Family::Logistic => 1.0,
            _ => a,
        };
        let p = Self { family, r, k, a };
        p.validate()?;
        Ok(p)
    }

    pub fn richards(r: f64, k: f64, a: f64) -> Result<Self> {
        Self::new(Family::Richards, r, k, a)
    }

    pub fn logistic(r: f64, k: f64) -> Result<Self> {
        Self::new(Family::Logistic, r, k, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.r) || !positive(self.k) {
            return Err(Error::Domain(format!(
                "growth parameters need r > 0 and K > 0 (r = {}, K = {})",
                self.r, self.k
            )));
        }
        if self.family != Family::Gompertz && !positive(self.a) {
            return Err(Error::Domain(format!("shape exponent must be positive (a = {})", self.a)));
        }
        Ok(())
    }

    /// Unchecked incidence mean `C'(C)`.
    ///
    /// Returns a non-positive value when `c_prev` lies outside the support of
    /// a bounded family; used on hot paths where the caller checks the sign.
    #[inline]
    pub fn rate(&self, c_prev: f64) -> f64 {
        match self.family {
            Family::Logistic => self.r * c_prev * (1.0 - c_prev / self.k),
            Family::Richards => self.r * c_prev * (1.0 - (c_prev / self.k).powf(self.a)),
            Family::Gompertz => self.r * c_prev * (self.k / c_prev).ln(),
            Family::Rosenzweig => self.r * c_prev * ((c_prev / self.k).powf(self.a) - 1.0),
        }
    }

    /// Expected new cases given the previous day's cumulative count.
    pub fn mean_incidence(&self, c_prev: f64) -> Result<f64> {
        if !(c_prev > 0.0) {
            return Err(Error::Domain(format!("cumulative count must be positive, got {c_prev}")));
        }
        if self.family.is_bounded() && c_prev > self.k {
            return Err(Error::Domain(format!(
                "cumulative count {c_prev} exceeds final size {}",
                self.k
            )));
        }
        let mu = self.rate(c_prev);
        if mu < 0.0 && mu > -1e-12 * self.r * self.k {
            return Ok(0.0);
        }
        Ok(mu)
    }

    /// Cumulative count at which incidence peaks, `K (1 + a)^(-1/a)`.
    ///
    /// The Gompertz limit `a -> 0` gives `K / e`.
    pub fn peak_threshold(&self) -> f64 {
        match self.family {
            Family::Gompertz => self.k / std::f64::consts::E,
            _ => self.k * (1.0 + self.a).powf(-1.0 / self.a),
        }
    }
}

/// Closed-form Richards cumulative curve `K / (1 + exp(-r (t - tau)))^(1/a)`.
pub fn richards_cumulative(p: &GrowthParams, t: f64, tau: f64) -> Result<f64> {
    match p.family {
        Family::Logistic | Family::Richards => {}
        other => {
            return Err(Error::Argument(format!("no closed-form cumulative curve for {other:?}")))
        }
    }
    let base = 1.0 + (-p.r * (t - tau)).exp();
    Ok(p.k / base.powf(1.0 / p.a))
}

/// Day at which a cumulative trajectory reaches the peak-incidence threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPoint {
    /// Real-valued day index (linear interpolation between bracketing days).
    pub tau: f64,
    pub peak_threshold: f64,
    /// False when the trajectory never reaches the threshold; `tau` is then
    /// one past the last day.
    pub reached: bool,
    /// Day with the largest daily increment, if the trajectory has one.
    pub argmax_day: Option<usize>,
}

/// Locates the turning point of `traj`, where `traj[i]` is the cumulative
/// count on day `i + 1`.
pub fn turning_point(p: &GrowthParams, traj: &[f64]) -> TurningPoint {
    let threshold = p.peak_threshold();
    let argmax_day = traj
        .windows(2)
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, w)| {
            let inc = w[1] - w[0];
            match best {
                Some((_, b)) if b >= inc => best,
                _ => Some((i + 2, inc)),
            }
        })
        .map(|(day, _)| day);

    let mut tau = traj.len() as f64 + 1.0;
    let mut reached = false;
    for (i, &c) in traj.iter().enumerate() {
        if c >= threshold {
            reached = true;
            tau = if i == 0 {
                1.0
            } else {
                let prev = traj[i - 1];
                i as f64 + (threshold - prev) / (c - prev)
            };
            break;
        }
    }
    TurningPoint { tau, peak_threshold: threshold, reached, argmax_day }
}

/// Three-point final-size estimator from cumulative counts spaced `m` days
/// apart and ending at day `t` (1-based). Exact on logistic curves.
pub fn k_point_estimate(cum: &[f64], t: usize, m: usize) -> Result<f64> {
    if m == 0 || t < 2 * m + 1 || t > cum.len() {
        return Err(Error::Argument(format!(
            "need 1 <= t - 2m and t <= {} (t = {t}, m = {m})",
            cum.len()
        )));
    }
    let c0 = cum[t - 2 * m - 1];
    let c1 = cum[t - m - 1];
    let c2 = cum[t - 1];
    let denom = c1 * c1 - c2 * c0;
    if denom.abs() < 1e-9 * c2 * c2 || denom == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "cumulative counts ({c0}, {c1}, {c2}) give a vanishing denominator"
        )));
    }
    let k = c1 * (c0 * c1 - 2.0 * c0 * c2 + c1 * c2) / denom;
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "cumulative counts ({c0}, {c1}, {c2}) give non-positive final size {k}"
        )));
    }
    Ok(k)
}

/// Default spacing for [`k_point_estimate`]: first, middle and last day.
pub fn default_spacing(t: usize) -> usize {
    (t.saturating_sub(1) / 2).max(1)
}

/// Rough curve fit used to start samplers near the bulk of the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotFit {
    pub params: GrowthParams,
    /// Moment estimate of the extra-Poisson variance `Var(eps)`.
    pub overdispersion: f64,
}

/// Grid search over `(a, K)` with `K` above `k_min`, taking the Poisson
/// maximum-likelihood `r` at each node. `prev_cum[i]` is the cumulative
/// count before the day with count `counts[i]`.
pub fn pilot_fit(family: Family, prev_cum: &[f64], counts: &[u64], k_min: f64) -> Option<PilotFit> {
    if prev_cum.is_empty() || prev_cum.len() != counts.len() || !(k_min > 0.0) {
        return None;
    }
    let shapes: Vec<f64> = match family {
        Family::Richards | Family::Rosenzweig => (0..25).map(|i| 10f64.powf(-1.3 + 0.08 * i as f64)).collect(),
        _ => vec![1.0],
    };
    let total: f64 = counts.iter().map(|&y| y as f64).sum();
    let mut best: Option<(f64, GrowthParams)> = None;
    for &a in &shapes {
        for j in 0..41 {
            let k = k_min * (1.0 + 10f64.powf(-4.0 + 0.125 * j as f64));
            let unit = GrowthParams { family, r: 1.0, k, a };
            let x: Vec<f64> = prev_cum.iter().map(|&c| unit.rate(c)).collect();
            if x.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                continue;
            }
            let r = total / x.iter().sum::<f64>();
            if !(r > 0.0) {
                continue;
            }
            let ll: f64 = counts
                .iter()
                .zip(&x)
                .map(|(&y, &xi)| y as f64 * (r * xi).ln() - r * xi)
                .sum();
            if best.is_none_or(|(b, _)| ll > b) {
                best = Some((ll, GrowthParams { family, r, k, a }));
            }
        }
    }
    let (_, params) = best?;
    let excess: Vec<f64> = prev_cum
        .iter()
        .zip(counts)
        .map(|(&c, &y)| {
            let mu = params.rate(c);
            ((y as f64 - mu).powi(2) - mu) / (mu * mu)
        })
        .collect();
    let overdispersion = (excess.iter().sum::<f64>() / excess.len() as f64).clamp(1e-3, 2.0);
    Some(PilotFit { params, overdispersion })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturation_gives_zero_mean() {
        let p = GrowthParams::richards(0.2, 1000.0, 0.7).unwrap();
        assert_eq!(p.mean_incidence(1000.0).unwrap(), 0.0);
        let g = GrowthParams::new(Family::Gompertz, 0.2, 1000.0, 1.0).unwrap();
        assert_eq!(g.mean_incidence(1000.0).unwrap(), 0.0);
    }

    #[test]
    fn richards_mean_direct() {
        let p = GrowthParams::richards(0.2, 1000.0, 1.0).unwrap();
        assert!((p.mean_incidence(500.0).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn mean_domain_errors() {
        let p = GrowthParams::richards(0.2, 1000.0, 1.0).unwrap();
        assert!(p.mean_incidence(0.0).is_err());
        assert!(p.mean_incidence(1000.5).is_err());
        let rz = GrowthParams::new(Family::Rosenzweig, 0.2, 1000.0, 1.0).unwrap();
        assert!(rz.mean_incidence(500.0).unwrap() < 0.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GrowthParams::richards(-0.1, 10.0, 1.0).is_err());
        assert!(GrowthParams::richards(0.1, 0.0, 1.0).is_err());
        assert!(GrowthParams::richards(0.1, 10.0, 0.0).is_err());
        assert!(GrowthParams::new(Family::Gompertz, 0.1, 10.0, 0.0).is_ok());
    }

    #[test]
    fn closed_form_examples() {
        let p = GrowthParams::logistic(0.2, 1000.0).unwrap();
        assert_eq!(richards_cumulative(&p, 50.0, 50.0).unwrap(), 500.0);
        let v = richards_cumulative(&p, 60.0, 50.0).unwrap();
        assert!((v - 1000.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-9);
        assert!((v - 880.797).abs() < 1e-3);
        let p2 = GrowthParams::richards(0.2, 1000.0, 2.0).unwrap();
        let v2 = richards_cumulative(&p2, 50.0, 50.0).unwrap();
        assert!((v2 - 1000.0 / 2f64.sqrt()).abs() < 1e-9);
        let g = GrowthParams::new(Family::Gompertz, 0.2, 1000.0, 1.0).unwrap();
        assert!(richards_cumulative(&g, 1.0, 0.0).is_err());
    }

    #[test]
    fn turning_point_of_logistic_curve() {
        let p = GrowthParams::logistic(0.2, 1000.0).unwrap();
        assert_eq!(p.peak_threshold(), 500.0);
        let traj: Vec<f64> = (1..=100)
            .map(|t| richards_cumulative(&p, t as f64, 50.0).unwrap())
            .collect();
        let tp = turning_point(&p, &traj);
        assert!(tp.reached);
        assert!((tp.tau - 50.0).abs() < 1e-12);
        // Largest daily increment straddles the midpoint.
        assert!(matches!(tp.argmax_day, Some(50) | Some(51)));
    }

    #[test]
    fn turning_point_not_reached() {
        let p = GrowthParams::logistic(0.2, 1000.0).unwrap();
        let tp = turning_point(&p, &[1.0, 2.0, 4.0]);
        assert!(!tp.reached);
        assert_eq!(tp.tau, 4.0);
    }

    #[test]
    fn k_estimate_exact_on_logistic() {
        let p = GrowthParams::logistic(0.2, 1000.0).unwrap();
        let cum: Vec<f64> = (1..=60)
            .map(|t| richards_cumulative(&p, t as f64, 50.0).unwrap())
            .collect();
        let k = k_point_estimate(&cum, 60, 10).unwrap();
        assert!((k - 1000.0).abs() / 1000.0 < 1e-8, "{k}");
    }

    #[test]
    fn k_estimate_flat_is_degenerate() {
        let cum = vec![5.0; 9];
        assert!(matches!(k_point_estimate(&cum, 9, 4), Err(Error::DegenerateGeometry(_))));
        assert!(k_point_estimate(&cum, 9, 5).is_err());
    }

    #[test]
    fn default_spacing_uses_first_and_last_day() {
        assert_eq!(default_spacing(121), 60);
        assert_eq!(default_spacing(120), 59);
    }
}
