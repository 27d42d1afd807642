//! Bayesian fitting and forecasting of daily epidemic counts with
//! Richards-family growth curves.
//!
//! New cases and deaths are modelled as Poisson counts whose means follow a
//! discrete growth recursion, `mu_t = r C_{t-1} [1 - (C_{t-1}/K)^a] eps_t`,
//! with overdispersion carried by per-day effects `eps_t` (gamma, lognormal
//! or log-Student). The crate provides
//!
//! * [`data`]: feed ingestion and the validated daily series,
//! * [`growth`]: growth curves, turning points, the three-point final-size estimator,
//! * [`errmodel`]: the overdispersion families,
//! * [`prior`]: the joint prior,
//! * [`mcmc`]: the adaptive Metropolis-within-Gibbs sampler, R-hat, WAIC, summaries,
//! * [`forecast`]: posterior-predictive paths and cross-validation scores,
//! * [`multiphase`]: switch-point models for later epidemic phases,
//! * [`rtestim`]: serial intervals and effective reproduction ratios,
//! * [`simulate`]: a synthetic data generator matching the fitted model.

pub mod data;
pub mod errmodel;
pub mod error;
pub mod forecast;
pub mod growth;
pub mod mcmc;
pub mod multiphase;
pub mod prior;
pub mod rtestim;
pub mod simulate;

pub use error::{Error, Result};
