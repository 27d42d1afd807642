//! Posterior sampling, convergence diagnostics, WAIC and summaries.

pub mod bivariate;
pub mod diagnostics;
pub mod sampler;
pub mod summary;
pub mod waic;

pub use bivariate::{fit_bivariate, log_posterior, BivariateModel, LatentEffects, ModelConfig, CASES, DEATHS};
pub use diagnostics::{gelman_rubin, max_rhat, split_rhat, RHat};
pub use sampler::{
    chain_rng, run_chains, ChainStats, Draw, Model, OutcomeData, ParamInfo, PosteriorDraws, SamplerConfig, Transform,
};
pub use summary::{quantiles, summarize, Summary, SummaryRow, DEFAULT_PROBS};
pub use waic::{waic, WaicComponent, WaicReport};
