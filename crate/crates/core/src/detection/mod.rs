//! Detection pipelines built on longest-run thresholds.
//!
//! * [`anomaly`] – a planted chain of elevated significance in a Bernoulli net.
//! * [`msra`] – multiscale parallelogram counting for a filament hidden in a
//!   uniform point cloud.
//! * [`track`] – moving targets observed through Gaussian noise.

pub mod anomaly;
pub mod msra;
pub mod track;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, DiscreteCDF, Normal, Poisson};

/// Outcome of one test, in the shape the CLI emits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// `true` rejects the null hypothesis.
    pub decision: bool,
    pub statistic: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<usize>,
    pub seed: u64,
}

/// `z` with `P(Z > z) = tail` for a standard normal `Z`.
pub fn normal_upper_quantile(tail: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - tail)
}

/// `P(X > n)` for `X ~ Poisson(lambda)`.
pub fn poisson_tail(lambda: f64, n: u64) -> f64 {
    Poisson::new(lambda).expect("positive rate").sf(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper tail by direct summation of the pmf, in log space.
    fn tail_by_series(lambda: f64, n: u64) -> f64 {
        let mut term = (-lambda).exp();
        let mut head = term;
        for k in 1..=n {
            term *= lambda / k as f64;
            head += term;
        }
        1.0 - head
    }

    #[test]
    fn poisson_tail_matches_series() {
        let p0 = poisson_tail(2.0, 6);
        assert!((p0 - 0.0045338).abs() < 1e-6, "{p0}");
        assert!((p0 - tail_by_series(2.0, 6)).abs() < 1e-12);
        assert!(p0 < 1.0 / 81.0);
        for &(l, n) in &[(0.5, 0), (3.0, 2), (10.0, 6), (25.0, 30)] {
            assert!((poisson_tail(l, n) - tail_by_series(l, n)).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_quantile_round_trip() {
        // Φ from erfc's continued-fraction-free rational fit (7.5e-8)
        fn phi_upper(z: f64) -> f64 {
            let t = 1.0 / (1.0 + 0.2316419 * z);
            let poly = t * (0.319381530 + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * poly
        }
        for &tail in &[0.3, 0.1, 0.025, 1e-3] {
            let z = normal_upper_quantile(tail);
            assert!((phi_upper(z) - tail).abs() < 1e-7, "{tail}: {z}");
        }
        assert!((normal_upper_quantile(0.025) - 1.959964).abs() < 1e-6);
    }
}
