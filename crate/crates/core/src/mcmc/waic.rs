//! Widely applicable information criterion from pointwise log-likelihoods.

use crate::error::{Error, Result};

use super::sampler::PosteriorDraws;

/// WAIC of one outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaicComponent {
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
}

/// WAIC per outcome and in total (`total = sum of outcomes`).
#[derive(Debug, Clone, PartialEq)]
pub struct WaicReport {
    pub outcomes: Vec<(String, WaicComponent)>,
    pub total: WaicComponent,
}

impl WaicReport {
    pub fn get(&self, outcome: &str) -> Option<&WaicComponent> {
        self.outcomes.iter().find(|(n, _)| n == outcome).map(|(_, c)| c)
    }

    /// Rows `outcome,lppd,p_waic,waic` with a final `total` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("outcome,lppd,p_waic,waic\n");
        for (name, c) in self.outcomes.iter().map(|(n, c)| (n.as_str(), c)).chain([("total", &self.total)]) {
            out.push_str(&format!("{name},{:.4},{:.4},{:.4}\n", c.lppd, c.p_waic, c.waic));
        }
        out
    }
}

/// WAIC from an `S x N` matrix of pointwise log-likelihoods, given as one
/// row per draw.
pub fn waic_from_pointwise(rows: &[&[f64]]) -> Result<WaicComponent> {
    let s = rows.len();
    if s < 2 {
        return Err(Error::Argument(format!("WAIC needs at least 2 draws, got {s}")));
    }
    let n = rows[0].len();
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut column = vec![0.0; s];
    for i in 0..n {
        for (c, r) in column.iter_mut().zip(rows) {
            *c = r[i];
        }
        let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lme = max + (column.iter().map(|v| (v - max).exp()).sum::<f64>() / s as f64).ln();
        let mean = column.iter().sum::<f64>() / s as f64;
        let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s as f64 - 1.0);
        lppd += lme;
        p_waic += var;
    }
    Ok(WaicComponent { lppd, p_waic, waic: -2.0 * (lppd - p_waic) })
}

/// WAIC per outcome, conditional on the sampled latent effects.
pub fn waic(draws: &PosteriorDraws) -> Result<WaicReport> {
    let mut outcomes = Vec::new();
    for (o, name) in draws.outcome_names.iter().enumerate() {
        let rows: Vec<&[f64]> = draws.draws.iter().map(|d| d.loglik[o].as_slice()).collect();
        outcomes.push((name.clone(), waic_from_pointwise(&rows)?));
    }
    let total = outcomes.iter().fold(WaicComponent { lppd: 0.0, p_waic: 0.0, waic: 0.0 }, |acc, (_, c)| {
        WaicComponent { lppd: acc.lppd + c.lppd, p_waic: acc.p_waic + c.p_waic, waic: acc.waic + c.waic }
    });
    Ok(WaicReport { outcomes, total })
}
