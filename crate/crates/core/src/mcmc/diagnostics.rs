//! Split-R-hat convergence diagnostic.

use crate::error::{Error, Result};

use super::sampler::PosteriorDraws;

/// Potential scale reduction for one scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct RHat {
    pub name: String,
    pub value: f64,
    /// Set when the within-chain variance is zero; `value` is then 1.
    pub degenerate: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R-hat of one scalar given its per-chain sequences.
///
/// Each chain is trimmed to the shortest length and cut in half (the middle
/// draw is dropped when the length is odd), so `m` chains give `2m`
/// sequences.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<(f64, bool)> {
    if chains.len() < 2 {
        return Err(Error::Argument(format!("split R-hat needs at least 2 chains, got {}", chains.len())));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 10 {
        return Err(Error::Argument(format!("split R-hat needs at least 10 draws per chain, got {n}")));
    }
    let half = n / 2;
    let mut seqs: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        seqs.push(&c[..half]);
        seqs.push(&c[n - half..n]);
    }
    let nf = half as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let within = mean(&seqs.iter().map(|s| sample_var(s)).collect::<Vec<_>>());
    let between = nf * sample_var(&means);
    if !(within > 0.0) {
        return Ok((1.0, true));
    }
    let var_plus = (nf - 1.0) / nf * within + between / nf;
    Ok(((var_plus / within).sqrt(), false))
}

/// Split-R-hat of every sampled parameter (derived quantities excluded).
pub fn gelman_rubin(draws: &PosteriorDraws) -> Result<Vec<RHat>> {
    draws.names[..draws.n_params]
        .iter()
        .map(|name| {
            let chains = draws.chains_of(name).expect("name taken from draws");
            let (value, degenerate) = split_rhat(&chains)?;
            Ok(RHat { name: name.clone(), value, degenerate })
        })
        .collect()
}

/// Largest R-hat, ignoring degenerate (constant) parameters.
pub fn max_rhat(rhats: &[RHat]) -> f64 {
    rhats.iter().filter(|r| !r.degenerate).map(|r| r.value).fold(1.0, f64::max)
}

pub fn rhat_csv(rhats: &[RHat]) -> String {
    let mut out = String::from("parameter,rhat,degenerate\n");
    for r in rhats {
        out.push_str(&format!("{},{:.4},{}\n", r.name, r.value, r.degenerate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chain(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
    }

    #[test]
    fn constant_chains_are_degenerate() {
        let (r, flag) = split_rhat(&[vec![2.0; 20], vec![2.0; 20]]).unwrap();
        assert_eq!((r, flag), (1.0, true));
    }

    #[test]
    fn same_distribution_gives_unit_rhat() {
        let (r, flag) = split_rhat(&[normal_chain(1, 20_000, 0.0), normal_chain(2, 20_000, 0.0)]).unwrap();
        assert!(!flag);
        assert!(r < 1.01, "{r}");
    }

    #[test]
    fn separated_chains_give_large_rhat() {
        let (r, _) = split_rhat(&[normal_chain(1, 1_000, 0.0), normal_chain(2, 1_000, 10.0)]).unwrap();
        assert!(r > 1.1, "{r}");
    }

    #[test]
    fn trend_within_chain_is_detected() {
        // Split halves catch drift that whole-chain R-hat would miss.
        let drift: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        let (r, _) = split_rhat(&[drift.clone(), drift]).unwrap();
        assert!(r > 1.1, "{r}");
    }

    #[test]
    fn preconditions() {
        assert!(split_rhat(&[vec![1.0; 20]]).is_err());
        assert!(split_rhat(&[vec![1.0; 5], vec![1.0; 5]]).is_err());
    }
}
