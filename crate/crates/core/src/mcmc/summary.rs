//! Posterior summaries (mean and type-7 quantiles, pooled over chains).

use super::sampler::PosteriorDraws;

/// Default summary probabilities.
pub const DEFAULT_PROBS: [f64; 3] = [0.025, 0.5, 0.975];

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantiles of unsorted data; NaNs are dropped.
pub fn quantiles(values: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return vec![f64::NAN; probs.len()];
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaNs filtered"));
    probs.iter().map(|&p| quantile_sorted(&v, p)).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub probs: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn get(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// CSV with columns `parameter,mean,q<p>...` (Table layout: mean first).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,mean");
        for p in &self.probs {
            out.push_str(&format!(",q{}", format_prob(*p)));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{}", r.name, fmt_sig(r.mean)));
            for q in &r.quantiles {
                out.push_str(&format!(",{}", fmt_sig(*q)));
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text table.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<12}{:>14}", "parameter", "mean");
        for p in &self.probs {
            out.push_str(&format!("{:>14}", format!("{}%", format_prob(*p * 100.0))));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<12}{:>14}", r.name, fmt_sig(r.mean)));
            for q in &r.quantiles {
                out.push_str(&format!("{:>14}", fmt_sig(*q)));
            }
            out.push('\n');
        }
        out
    }
}

fn format_prob(p: f64) -> String {
    let s = format!("{p:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Four significant digits, plain notation.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return "NA".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let digits = (3 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.digits$}")
}

/// Mean and quantiles of the named columns (all columns when `names` is empty).
pub fn summarize(draws: &PosteriorDraws, names: &[&str], probs: &[f64]) -> Summary {
    let selected: Vec<String> = if names.is_empty() {
        draws.names.clone()
    } else {
        names.iter().filter(|n| draws.index_of(n).is_some()).map(|n| n.to_string()).collect()
    };
    let rows = selected
        .into_iter()
        .map(|name| {
            let col = draws.column(&name).expect("selected from draws");
            summarize_values(&name, &col, probs)
        })
        .collect();
    Summary { probs: probs.to_vec(), rows }
}

pub fn summarize_values(name: &str, values: &[f64], probs: &[f64]) -> SummaryRow {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    SummaryRow {
        name: name.to_string(),
        mean: if finite.is_empty() { f64::NAN } else { mean(&finite) },
        quantiles: quantiles(&finite, probs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values() {
        let r = summarize_values("x", &[4.2; 7], &DEFAULT_PROBS);
        assert_eq!(r.mean, 4.2);
        assert!(r.quantiles.iter().all(|&q| q == 4.2));
    }

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = summarize_values("x", &v, &DEFAULT_PROBS);
        assert_eq!(r.mean, 50.5);
        assert!((r.quantiles[0] - 3.475).abs() < 1e-12);
        assert!((r.quantiles[1] - 50.5).abs() < 1e-12);
        assert!((r.quantiles[2] - 97.525).abs() < 1e-12);
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_sig(302_812.4), "302812");
        assert_eq!(fmt_sig(0.12345), "0.1235");
        assert_eq!(fmt_sig(85.61), "85.61");
        assert_eq!(format_prob(0.025), "0.025");
        assert_eq!(format_prob(50.0), "50");
    }
}
