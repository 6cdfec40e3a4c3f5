//! Summaries of rejection indicators: Wilson intervals, exact McNemar
//! comparisons and Bonferroni adjustment.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::numerics::{ln_gamma, normal_quantile};

/// Wilson score interval for `successes / trials` at confidence `level`.
pub fn wilson_ci(successes: usize, trials: usize, level: f64) -> Result<(f64, f64), SimError> {
    if trials == 0 || successes > trials {
        return Err(SimError::InvalidArgument(format!(
            "wilson interval needs 0 <= successes <= trials and trials >= 1, got {successes}/{trials}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(SimError::InvalidArgument(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lower = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    Ok((lower, upper))
}

/// `P(Bin(m, 1/2) <= k)`.
fn binomial_half_cdf(k: usize, m: usize) -> f64 {
    let ln_half = -(m as f64) * std::f64::consts::LN_2;
    let ln_choose = |i: usize| {
        ln_gamma(m as f64 + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma((m - i) as f64 + 1.0)
    };
    (0..=k)
        .map(|i| (ln_choose(i) + ln_half).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Two-sided exact McNemar p-value from the discordant counts.
pub fn mcnemar_exact(b: usize, c: usize) -> f64 {
    let m = b + c;
    if m == 0 {
        return 1.0;
    }
    (2.0 * binomial_half_cdf(b.min(c), m)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarOutcome {
    /// Replications where only the first test rejected.
    pub only_first: usize,
    /// Replications where only the second test rejected.
    pub only_second: usize,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

/// Exact McNemar test on paired reject flags.
pub fn mcnemar_compare(flags_a: &[bool], flags_b: &[bool]) -> Result<McNemarOutcome, SimError> {
    if flags_a.len() != flags_b.len() {
        return Err(SimError::InvalidArgument(format!(
            "flag vectors differ in length ({} vs {})",
            flags_a.len(),
            flags_b.len()
        )));
    }
    let only_first = flags_a
        .iter()
        .zip(flags_b)
        .filter(|(a, b)| **a && !**b)
        .count();
    let only_second = flags_a
        .iter()
        .zip(flags_b)
        .filter(|(a, b)| !**a && **b)
        .count();
    let warning = (only_first + only_second == 0)
        .then(|| "no discordant pairs; p-value set to 1".to_string());
    Ok(McNemarOutcome {
        only_first,
        only_second,
        p_value: mcnemar_exact(only_first, only_second),
        warning,
    })
}

/// Bonferroni-adjusted p-value for one of `comparisons` tests.
pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons.max(1) as f64).min(1.0)
}

/// Per-comparison significance level.
pub fn bonferroni_threshold(alpha: f64, comparisons: usize) -> f64 {
    alpha / comparisons.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_closed_form() {
        let (lo, hi) = wilson_ci(50, 100, 0.95).unwrap();
        assert!((lo - 0.4038).abs() < 5e-4 && (hi - 0.5962).abs() < 5e-4);
        assert_eq!(wilson_ci(0, 30, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_ci(30, 30, 0.95).unwrap().1, 1.0);
        assert!(wilson_ci(3, 2, 0.95).is_err());
        assert!(wilson_ci(0, 0, 0.95).is_err());
    }

    #[test]
    fn mcnemar_examples() {
        assert_eq!(mcnemar_exact(0, 0), 1.0);
        assert!((mcnemar_exact(10, 0) - 2.0 * 0.5f64.powi(10)).abs() < 1e-15);
        assert_eq!(mcnemar_exact(1, 0), 1.0);
        assert_eq!(mcnemar_exact(5, 5), 1.0);
        let same = [true, false, true];
        let out = mcnemar_compare(&same, &same).unwrap();
        assert_eq!(out.p_value, 1.0);
        assert!(out.warning.is_some());
        assert!(mcnemar_compare(&same, &same[..2]).is_err());
    }

    #[test]
    fn bonferroni_matches_reported_thresholds() {
        assert!((bonferroni_threshold(0.05, 24) - 2.08e-3).abs() < 1e-5);
        assert!((bonferroni_threshold(0.05, 12) - 4.16e-3).abs() < 1e-5);
        assert_eq!(bonferroni(0.2, 10), 1.0);
    }
}
