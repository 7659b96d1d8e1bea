//! Scalar Gaussian helpers: the standard normal CDF, its inverse and
//! interval probabilities for a Gaussian with a given mean and variance.
//!
//! The second Gaussian parameter is a variance everywhere in this crate.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("probability {0} is outside the open interval (0, 1)")]
    Domain(f64),
    #[error("interval lower end {lo} exceeds upper end {hi}")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("variance {0} is negative or not finite")]
    InvalidVariance(f64),
}

/// A Gaussian random variable stored as `(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianScalar {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianScalar {
    pub fn new(mean: f64, variance: f64) -> Result<Self, NumericsError> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(NumericsError::InvalidVariance(variance));
        }
        Ok(Self { mean, variance })
    }

    /// A point mass at `mean`.
    pub const fn deterministic(mean: f64) -> Self {
        Self { mean, variance: 0.0 }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Distribution of `w * X`.
    pub fn scaled(&self, w: f64) -> Self {
        Self {
            mean: self.mean * w,
            variance: self.variance * w * w,
        }
    }

    /// Distribution of the sum of two independent variables.
    pub fn add_independent(&self, other: &Self) -> Self {
        Self {
            mean: self.mean + other.mean,
            variance: self.variance + other.variance,
        }
    }

    /// `P(X >= t)`; a point mass counts as exceeding when `mean >= t`.
    pub fn upper_tail(&self, t: f64) -> f64 {
        if self.variance <= 0.0 {
            return if self.mean >= t { 1.0 } else { 0.0 };
        }
        std_normal_cdf((self.mean - t) / self.std_dev())
    }
}

const SERIES_LIMIT: f64 = 3.0;
const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// erf(x) for 0 <= x <= SERIES_LIMIT using the all-positive-term series
/// erf(x) = 2/sqrt(pi) exp(-x^2) sum 2^n x^(2n+1) / (2n+1)!!.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    TWO_OVER_SQRT_PI * (-x2).exp() * sum
}

/// erfc(x) for x > SERIES_LIMIT by the Laplace continued fraction
/// evaluated with the modified Lentz algorithm.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..1000 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Complementary error function for x >= 0.
fn erfc_nonneg(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// Standard normal cumulative distribution function.
///
/// Absolute error is below 1e-12 on the whole real line. Non-finite inputs
/// saturate to 0 or 1 (NaN maps to NaN).
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    let u = x.abs() * FRAC_1_SQRT_2;
    if x >= 0.0 {
        if u <= SERIES_LIMIT {
            0.5 * (1.0 + erf_series(u))
        } else {
            1.0 - 0.5 * erfc_continued_fraction(u)
        }
    } else {
        0.5 * erfc_nonneg(u)
    }
}

/// Inverse of [`std_normal_cdf`] by bisection.
pub fn std_normal_quantile(p: f64) -> Result<f64, NumericsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NumericsError::Domain(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if std_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `P(lo < X <= hi)` for `X ~ g`. Infinite ends are allowed.
pub fn interval_probability(lo: f64, hi: f64, g: GaussianScalar) -> Result<f64, NumericsError> {
    if lo > hi {
        return Err(NumericsError::InvalidInterval { lo, hi });
    }
    if !(g.variance >= 0.0) {
        return Err(NumericsError::InvalidVariance(g.variance));
    }
    if g.variance == 0.0 {
        return Ok(if g.mean > lo && g.mean <= hi { 1.0 } else { 0.0 });
    }
    let sd = g.std_dev();
    let p = std_normal_cdf((hi - g.mean) / sd) - std_normal_cdf((lo - g.mean) / sd);
    Ok(p.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference values computed with 40-digit arbitrary precision arithmetic.
    const CDF_TABLE: &[(f64, f64)] = &[
        (-8.0, 6.220960574271784e-16),
        (-5.0, 2.866515718791939e-7),
        (-3.0, 0.0013498980316300946),
        (-1.5, 0.06680720126885807),
        (0.3, 0.6179114221889526),
        (0.7, 0.758036347776927),
        (2.2, 0.9860965524865014),
        (4.0, 0.9999683287581669),
        (6.5, 0.99999999995984),
    ];

    #[test]
    fn cdf_matches_reference_table() {
        for &(x, want) in CDF_TABLE {
            let got = std_normal_cdf(x);
            assert!((got - want).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(1.6448536269514722) - 0.95).abs() < 1e-12);
        assert!((std_normal_cdf(-0.7) - (1.0 - std_normal_cdf(0.7))).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!((std_normal_quantile(0.95).unwrap() - 1.6448536269514722).abs() < 1e-9);
        assert!((std_normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn quantile_domain_errors() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(NumericsError::Domain(_))));
        }
    }

    #[test]
    fn quantile_inverts_cdf_on_grid() {
        let mut p = 0.01;
        while p < 0.995 {
            let q = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(q) - p).abs() < 1e-10, "p={p}");
            p += 0.04;
        }
    }

    #[test]
    fn cdf_monotone_and_bounded_on_grid() {
        let n = 10_000;
        let mut prev = 0.0;
        for i in 0..=n {
            let x = -8.0 + 16.0 * i as f64 / n as f64;
            let v = std_normal_cdf(x);
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= prev, "not monotone at {x}");
            prev = v;
        }
    }

    #[test]
    fn interval_examples() {
        let g = GaussianScalar::new(3.0, 4.0).unwrap();
        let below = interval_probability(f64::NEG_INFINITY, 3.0, g).unwrap();
        assert!((below - 0.5).abs() < 1e-15);
        let one_sigma = interval_probability(1.0, 5.0, g).unwrap();
        assert!((one_sigma - 0.6826894921370859).abs() < 1e-9);
        let point = GaussianScalar::deterministic(2.0);
        assert_eq!(interval_probability(0.0, 1.0, point).unwrap(), 0.0);
        assert_eq!(interval_probability(1.0, 2.0, point).unwrap(), 1.0);
        assert!(interval_probability(2.0, 1.0, g).is_err());
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(GaussianScalar::new(1.0, -1e-3).is_err());
    }

    proptest! {
        #[test]
        fn interval_probability_is_additive(
            mean in -50.0f64..50.0,
            var in 1e-3f64..400.0,
            a in -100.0f64..100.0,
            w1 in 0.0f64..30.0,
            w2 in 0.0f64..30.0,
        ) {
            let g = GaussianScalar::new(mean, var).unwrap();
            let (b, c) = (a + w1, a + w1 + w2);
            let left = interval_probability(a, b, g).unwrap();
            let right = interval_probability(b, c, g).unwrap();
            let whole = interval_probability(a, c, g).unwrap();
            prop_assert!(left >= 0.0 && right >= 0.0);
            prop_assert!((left + right - whole).abs() < 1e-12);
        }

        #[test]
        fn cdf_symmetry(x in -10.0f64..10.0) {
            prop_assert!((std_normal_cdf(-x) + std_normal_cdf(x) - 1.0).abs() < 1e-14);
        }
    }
}
