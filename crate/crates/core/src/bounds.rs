//! Anytime confidence bounds on class frequencies.
//!
//! Two interval families are provided:
//!
//! - **Chernoff (KL) intervals** for Bernoulli observations. The bound is the
//!   set of `x` with `KL(p_hat, x) <= ln(1/delta)/n`; its endpoints have no
//!   closed form and are found by bisection on a convex 1-D problem.
//! - **Empirical-Bernstein intervals** for bounded, importance-weighted
//!   observations on `[0, m]`, which tighten when the sample variance is small.
//!
//! [`uniform_stopping_count`] gives the number of uniform draws after which a
//! class never observed can be declared rarer than `gamma`.
//!
//! All logarithms are natural.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Iteration cap for the bisection solvers. Bisection on `[0, 1]` reaches
/// adjacent floats well before this.
const MAX_BISECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("empirical Bernstein bound needs at least 2 observations, got {0}")]
    TooFewObservations(u64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("gamma must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
}

/// A two-sided confidence interval on a frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
    pub n: u64,
}

impl Interval {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Running moments of observations bounded on `[0, range_max]`.
///
/// Mean and variance are accumulated with Welford's update; `variance()` uses
/// the unbiased `n - 1` denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSampleStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    pub range_max: f64,
}

impl WeightedSampleStats {
    pub fn new(range_max: f64) -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            range_max,
        }
    }

    /// Stats of `n` zero observations.
    pub fn zeros(n: u64, range_max: f64) -> Self {
        Self {
            n,
            ..Self::new(range_max)
        }
    }

    pub fn from_samples(samples: &[f64], range_max: f64) -> Self {
        let mut stats = Self::new(range_max);
        for &z in samples {
            stats.push(z);
        }
        stats
    }

    pub fn push(&mut self, z: f64) {
        self.n += 1;
        let delta = z - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (z - self.mean);
    }

    /// Unbiased sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }
}

/// Bernoulli KL divergence `KL(p, q)` in nats, with `0 ln 0 = 0`.
///
/// Returns `+inf` when `q` is 0 or 1 and `p` differs from it.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    if p == q {
        return 0.0;
    }
    if q <= 0.0 || q >= 1.0 {
        return f64::INFINITY;
    }
    let pos = if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let neg = if p < 1.0 {
        (1.0 - p) * ((-p).ln_1p() - (-q).ln_1p())
    } else {
        0.0
    };
    (pos + neg).max(0.0)
}

fn kl_radius(n: u64, delta: f64) -> f64 {
    (1.0 / delta).ln() / n as f64
}

/// Largest `x` in `[p_hat, 1]` with `KL(p_hat, x) <= ln(1/delta)/n`.
///
/// `n = 0` carries no information and yields 1.
pub fn chernoff_upper(p_hat: f64, n: u64, delta: f64) -> f64 {
    let p_hat = p_hat.clamp(0.0, 1.0);
    if n == 0 || p_hat >= 1.0 {
        return 1.0;
    }
    let radius = kl_radius(n, delta);
    let below_one = 1.0 - f64::EPSILON / 2.0;
    if bernoulli_kl(p_hat, below_one) <= radius {
        return 1.0;
    }
    // lo is always feasible, hi never is.
    let (mut lo, mut hi) = (p_hat, below_one);
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bernoulli_kl(p_hat, mid) <= radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `x` in `[0, p_hat]` with `KL(p_hat, x) <= ln(1/delta)/n`.
pub fn chernoff_lower(p_hat: f64, n: u64, delta: f64) -> f64 {
    let p_hat = p_hat.clamp(0.0, 1.0);
    if n == 0 || p_hat <= 0.0 {
        return 0.0;
    }
    let radius = kl_radius(n, delta);
    if bernoulli_kl(p_hat, f64::MIN_POSITIVE) <= radius {
        return 0.0;
    }
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, p_hat);
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bernoulli_kl(p_hat, mid) <= radius {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn chernoff_interval(p_hat: f64, n: u64, delta: f64) -> Interval {
    Interval {
        lower: chernoff_lower(p_hat, n, delta),
        upper: chernoff_upper(p_hat, n, delta),
        delta,
        n,
    }
}

/// Half-width of the two-sided empirical-Bernstein interval for observations
/// on `[0, m]`:
///
/// `sqrt(2 V ln(2/delta) / n) + 7 m ln(2/delta) / (3 (n - 1))`
///
/// where `V` is the unbiased variance of the raw observations.
pub fn bernstein_width(stats: &WeightedSampleStats, delta: f64) -> Result<f64, BoundsError> {
    if stats.n < 2 {
        return Err(BoundsError::TooFewObservations(stats.n));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundsError::InvalidDelta(delta));
    }
    let n = stats.n as f64;
    let log_term = (2.0 / delta).ln();
    let variance_term = (2.0 * stats.variance() * log_term / n).sqrt();
    let range_term = 7.0 * stats.range_max * log_term / (3.0 * (n - 1.0));
    Ok(variance_term + range_term)
}

/// Bernstein interval around the sample mean, clipped to the feasible range of
/// a frequency, `[0, min(m, 1)]`.
pub fn bernstein_interval(
    stats: &WeightedSampleStats,
    delta: f64,
) -> Result<Interval, BoundsError> {
    let width = bernstein_width(stats, delta)?;
    let cap = stats.range_max.min(1.0);
    Ok(Interval {
        lower: (stats.mean - width).clamp(0.0, cap),
        upper: (stats.mean + width).clamp(0.0, cap),
        delta,
        n: stats.n,
    })
}

/// Number of uniform draws `ceil(ln(1/delta) / gamma^2)` after which a class
/// of frequency above `gamma` has been seen with probability at least
/// `1 - delta`.
pub fn uniform_stopping_count(gamma: f64, delta: f64) -> Result<u64, BoundsError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(BoundsError::InvalidGamma(gamma));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundsError::InvalidDelta(delta));
    }
    let raw = (1.0 / delta).ln() / (gamma * gamma);
    // Snap values a rounding error away from an integer so that e.g.
    // gamma = 1, delta = 1/e gives 1 rather than 2.
    let nearest = raw.round();
    let count = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    Ok((count as u64).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn kl_identity_and_edges() {
        assert_eq!(bernoulli_kl(0.5, 0.5), 0.0);
        for q in [0.01, 0.3, 0.9] {
            assert_abs_diff_eq!(bernoulli_kl(0.0, q), -(1.0f64 - q).ln(), epsilon = 1e-15);
            assert_abs_diff_eq!(bernoulli_kl(1.0, q), -q.ln(), epsilon = 1e-15);
        }
        assert_eq!(bernoulli_kl(0.3, 0.0), f64::INFINITY);
        assert_eq!(bernoulli_kl(0.3, 1.0), f64::INFINITY);
        assert_eq!(bernoulli_kl(1.0, 1.0), 0.0);
    }

    #[test]
    fn kl_matches_high_precision_value() {
        // mpmath, 40 digits
        assert_abs_diff_eq!(bernoulli_kl(0.1, 0.2), 0.036_690_014_034_750_578, epsilon = 1e-15);
    }

    #[test]
    fn chernoff_closed_forms() {
        assert_eq!(chernoff_upper(1.0, 10, 0.05), 1.0);
        assert_eq!(chernoff_lower(0.0, 10, 0.05), 0.0);
        let closed = -((0.05f64).ln() / 59.0).exp_m1();
        assert_abs_diff_eq!(chernoff_upper(0.0, 59, 0.05), closed, epsilon = 1e-12);
        assert_abs_diff_eq!(chernoff_upper(0.0, 59, 0.05), 0.049_507_609_888_226_95, epsilon = 1e-12);
        assert_abs_diff_eq!(chernoff_lower(1.0, 59, 0.05), 0.950_492_390_111_773_05, epsilon = 1e-12);
    }

    #[test]
    fn chernoff_width_shrinks_to_point() {
        let u = chernoff_upper(0.5, 100_000_000, 0.05);
        assert!(u >= 0.5 && u - 0.5 < 1e-3);
        let l = chernoff_lower(0.5, 100_000_000, 0.05);
        assert!(l <= 0.5 && 0.5 - l < 1e-3);
    }

    #[test]
    fn chernoff_no_data_is_vacuous() {
        let iv = chernoff_interval(0.0, 0, 0.05);
        assert_eq!((iv.lower, iv.upper), (0.0, 1.0));
    }

    #[test]
    fn bernstein_worked_example() {
        let stats = WeightedSampleStats {
            n: 101,
            mean: 0.0,
            m2: 0.0,
            range_max: 1.0,
        };
        let delta = 2.0 * (-2.0f64).exp();
        assert_abs_diff_eq!(bernstein_width(&stats, delta).unwrap(), 14.0 / 300.0, epsilon = 1e-12);
    }

    #[test]
    fn bernstein_degenerate_cases() {
        let constant = WeightedSampleStats::zeros(10, 0.0);
        assert_eq!(bernstein_width(&constant, 0.05).unwrap(), 0.0);
        let one = WeightedSampleStats::from_samples(&[0.3], 1.0);
        assert_eq!(
            bernstein_width(&one, 0.05),
            Err(BoundsError::TooFewObservations(1))
        );
    }

    #[test]
    fn bernstein_width_nonincreasing_in_n() {
        let mut prev = f64::INFINITY;
        for n in 2..500u64 {
            let stats = WeightedSampleStats {
                n,
                mean: 0.2,
                m2: 0.04 * (n - 1) as f64,
                range_max: 3.0,
            };
            let w = bernstein_width(&stats, 0.05).unwrap();
            assert!(w <= prev);
            prev = w;
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [0.0, 2.5, 0.0, 0.0, 2.5, 1.0, 0.0];
        let stats = WeightedSampleStats::from_samples(&xs, 2.5);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_abs_diff_eq!(stats.mean, mean, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.variance(), var, epsilon = 1e-14);
    }

    #[test]
    fn stopping_count_values() {
        assert_eq!(uniform_stopping_count(0.1, 0.05).unwrap(), 300);
        assert_eq!(uniform_stopping_count(1.0, (-1.0f64).exp()).unwrap(), 1);
        let full = uniform_stopping_count(0.02, 0.05).unwrap();
        let half = uniform_stopping_count(0.01, 0.05).unwrap();
        assert!(half.abs_diff(4 * full) <= 4);
        assert!(uniform_stopping_count(0.0, 0.05).is_err());
    }

    proptest! {
        #[test]
        fn chernoff_root_and_ordering(p in 0.0f64..=1.0, n in 1u64..5000, delta in 0.001f64..0.5) {
            let iv = chernoff_interval(p, n, delta);
            prop_assert!(iv.lower <= p && p <= iv.upper);
            let radius = (1.0 / delta).ln() / n as f64;
            if iv.upper < 1.0 {
                prop_assert!((bernoulli_kl(p, iv.upper) - radius).abs() <= 1e-9);
            }
            if iv.lower > 0.0 {
                prop_assert!((bernoulli_kl(p, iv.lower) - radius).abs() <= 1e-9);
            }
        }

        #[test]
        fn chernoff_monotone(p in 0.0f64..0.99, n in 1u64..2000, delta in 0.001f64..0.5) {
            prop_assert!(chernoff_upper(p, n + 1, delta) <= chernoff_upper(p, n, delta));
            prop_assert!(chernoff_upper(p + 0.01, n, delta) >= chernoff_upper(p, n, delta));
        }

        #[test]
        fn intervals_nest_in_delta(p in 0.0f64..=1.0, n in 2u64..2000, d1 in 0.001f64..0.2, gap in 0.0f64..0.5) {
            let d2 = d1 + gap;
            let tight = chernoff_interval(p, n, d2);
            let wide = chernoff_interval(p, n, d1);
            prop_assert!(wide.lower <= tight.lower && tight.upper <= wide.upper);
            let stats = WeightedSampleStats { n, mean: p * 0.5, m2: 0.1 * (n - 1) as f64, range_max: 2.0 };
            prop_assert!(bernstein_width(&stats, d1).unwrap() >= bernstein_width(&stats, d2).unwrap());
        }
    }
}
