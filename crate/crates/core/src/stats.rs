//! Monte Carlo summaries with normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A point estimate with its standard error and 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
    /// Set when the estimator was undefined (e.g. zero empirical variance).
    #[serde(default)]
    pub degenerate: bool,
}

impl Estimate {
    pub fn new(estimate: f64, std_error: f64, samples: usize) -> Self {
        Estimate {
            estimate,
            std_error,
            ci_low: estimate - Z95 * std_error,
            ci_high: estimate + Z95 * std_error,
            samples,
            degenerate: false,
        }
    }

    /// Sample mean with CLT standard error.
    pub fn mean(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate {
                degenerate: true,
                ..Estimate::new(0.0, 0.0, 0)
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate::new(mean, (var / n as f64).sqrt(), n)
    }

    /// Sample Pearson correlation of paired outputs. The standard error uses
    /// the influence function `uv - r(u² + v²)/2` of the correlation
    /// functional, which does not assume normality.
    pub fn correlation(pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len();
        if n < 2 {
            return Estimate {
                degenerate: true,
                ..Estimate::new(0.0, 0.0, n)
            };
        }
        let nf = n as f64;
        let (mu, mv) = pairs.iter().fold((0.0, 0.0), |(a, b), &(u, v)| (a + u, b + v));
        let (mu, mv) = (mu / nf, mv / nf);
        let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
        for &(u, v) in pairs {
            let (du, dv) = (u - mu, v - mv);
            suu += du * du;
            svv += dv * dv;
            suv += du * dv;
        }
        if suu <= 0.0 || svv <= 0.0 {
            return Estimate {
                degenerate: true,
                ..Estimate::new(0.0, 0.0, n)
            };
        }
        let (su, sv) = ((suu / nf).sqrt(), (svv / nf).sqrt());
        let r = suv / (suu * svv).sqrt();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &(u, v) in pairs {
            let (a, b) = ((u - mu) / su, (v - mv) / sv);
            let inf = a * b - 0.5 * r * (a * a + b * b);
            s1 += inf;
            s2 += inf * inf;
        }
        let m = s1 / nf;
        let var_inf = (s2 / nf - m * m).max(0.0);
        Estimate::new(r, (var_inf / nf).sqrt(), n)
    }

    /// True when `value` lies within `k` standard errors of the estimate.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_constant_has_zero_error() {
        let e = Estimate::mean(&[2.0; 10]);
        assert_eq!(e.estimate, 2.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn perfect_correlation() {
        let pairs: Vec<_> = (0..100).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let e = Estimate::correlation(&pairs);
        assert!((e.estimate - 1.0).abs() < 1e-12);
        assert!(e.std_error < 1e-6);
    }

    #[test]
    fn constant_output_is_degenerate() {
        let pairs = vec![(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)];
        assert!(Estimate::correlation(&pairs).degenerate);
    }
}
