//! Concentration bounds and entropy helpers.
//!
//! Two directions of the multiplicative Chernoff bound are provided:
//! [`chernoff_observed_bounds`] turns an expected value into an interval for
//! the observation, and [`chernoff_expected_bounds`] goes the other way.
//! [`sampling_gap`] bounds the deviation between the error rate of a random
//! sample and that of its complement when sampling without replacement.
//!
//! All lower bounds are clamped at zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Failure probability of a single concentration-bound invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FailureProb(f64);

impl FailureProb {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon < 1.0 {
            Ok(Self(epsilon))
        } else {
            Err(Error::Parameter(format!(
                "failure probability must lie in (0, 1), got {epsilon}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `ln(1/ε)`.
    pub fn beta(self) -> f64 {
        -self.0.ln()
    }
}

impl TryFrom<f64> for FailureProb {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FailureProb> for f64 {
    fn from(e: FailureProb) -> f64 {
        e.0
    }
}

/// A closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

fn check_count(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{name} must be a finite nonnegative count, got {x}"
        )))
    }
}

/// Interval for an observed count given its expectation `x_star`.
pub fn chernoff_observed_bounds(x_star: f64, eps: FailureProb) -> Result<Bounds> {
    check_count("expected count", x_star)?;
    let b = eps.beta();
    Ok(Bounds {
        lower: (x_star - (2.0 * b * x_star).sqrt()).max(0.0),
        upper: x_star + b / 2.0 + (2.0 * b * x_star + b * b / 4.0).sqrt(),
    })
}

/// Interval for the expectation of a count given its observation `x`.
pub fn chernoff_expected_bounds(x: f64, eps: FailureProb) -> Result<Bounds> {
    check_count("observed count", x)?;
    let b = eps.beta();
    Ok(Bounds {
        lower: (x - b / 2.0 - (2.0 * b * x + b * b / 4.0).sqrt()).max(0.0),
        upper: x + b + (2.0 * b * x + b * b).sqrt(),
    })
}

/// Upper bound `γ^U(n, k, λ, ε)` on the gap between the error rate `λ`
/// observed on `k` sampled items and the rate on the remaining `n` items.
///
/// When the logarithm in `G` turns negative (large samples, loose ε) the gap
/// is reported as 0, its `G → 0` limit.
pub fn sampling_gap(n: f64, k: f64, lambda: f64, eps: FailureProb) -> Result<f64> {
    if !(n.is_finite() && k.is_finite() && n >= 1.0 && k >= 1.0) {
        return Err(Error::Domain(format!(
            "sampling gap needs n, k >= 1 (got n={n}, k={k})"
        )));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!(
            "sampling gap needs 0 < lambda < 1, got {lambda}"
        )));
    }
    let e = eps.value();
    let nk = n + k;
    let var = lambda * (1.0 - lambda);
    // ε² underflows for tiny ε; keep the logarithm in split form.
    let log_arg = nk.ln() - (2.0 * PI * n * k * var).ln() - 2.0 * e.ln();
    let g = nk / (n * k) * log_arg;
    if g <= 0.0 {
        return Ok(0.0);
    }
    let a = n.max(k);
    let num = (1.0 - 2.0 * lambda) * a * g / nk + (a * a * g * g / (nk * nk) + 4.0 * var * g).sqrt();
    let den = 2.0 + 2.0 * a * a * g / (nk * nk);
    Ok((num / den).max(0.0))
}

/// Binary entropy `H₂(x)` in bits, with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy of {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(e: f64) -> FailureProb {
        FailureProb::new(e).unwrap()
    }

    #[test]
    fn failure_prob_rejects_endpoints() {
        assert!(FailureProb::new(0.0).is_err());
        assert!(FailureProb::new(1.0).is_err());
        assert!(FailureProb::new(f64::NAN).is_err());
        assert!((eps(1e-10).beta() - 23.025_850_929_940_457).abs() < 1e-12);
    }

    #[test]
    fn observed_bounds_at_zero() {
        let b = chernoff_observed_bounds(0.0, eps(1e-10)).unwrap();
        assert_eq!(b.lower, 0.0);
        assert!((b.upper - 23.025_850_929_940_457).abs() < 1e-9);
    }

    #[test]
    fn observed_bounds_at_one_million() {
        let b = chernoff_observed_bounds(1e6, eps(1e-10)).unwrap();
        assert!((b.upper - 1_006_797.663_115_914).abs() < 1e-6);
        assert!((b.lower - 993_213.859_575_584_9).abs() < 1e-6);
    }

    #[test]
    fn expected_bounds_values() {
        let z = chernoff_expected_bounds(0.0, eps(1e-10)).unwrap();
        assert_eq!(z.lower, 0.0);
        assert!((z.upper - 46.051_701_859_880_914).abs() < 1e-9);
        let b = chernoff_expected_bounds(1e6, eps(1e-10)).unwrap();
        assert!((b.upper - 1_006_809.205_339_397).abs() < 1e-6);
        assert!((b.lower - 993_202.336_884_085_8).abs() < 1e-6);
    }

    #[test]
    fn negative_counts_rejected() {
        assert!(chernoff_observed_bounds(-1.0, eps(0.1)).is_err());
        assert!(chernoff_expected_bounds(f64::INFINITY, eps(0.1)).is_err());
    }

    #[test]
    fn sampling_gap_values() {
        let g = sampling_gap(1e6, 1e6, 0.25, eps(1e-10)).unwrap();
        assert!((g - 0.003_513_459_403_021_770).abs() < 1e-13);
        let small = sampling_gap(1e6, 1e3, 0.1, eps(1e-10)).unwrap();
        let big = sampling_gap(1e6, 1e6, 0.1, eps(1e-10)).unwrap();
        assert!((small - 0.075_900_390_826_101_99).abs() < 1e-12);
        assert!((big - 0.002_468_999_630_985_473).abs() < 1e-13);
        assert!(small > big);
    }

    #[test]
    fn sampling_gap_half_rate_form() {
        let (n, e) = (5e5, eps(1e-8));
        let g_val = 2.0 / n * ((2.0 * n) / (2.0 * PI * n * n * 0.25 * e.value().powi(2))).ln();
        let expect = (g_val * g_val / 4.0 + g_val).sqrt() / (2.0 + g_val / 2.0);
        let got = sampling_gap(n, n, 0.5, e).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn sampling_gap_domain() {
        assert!(sampling_gap(1e3, 1e3, 0.0, eps(0.1)).is_err());
        assert!(sampling_gap(1e3, 1e3, 1.0, eps(0.1)).is_err());
        assert!(sampling_gap(0.5, 1e3, 0.1, eps(0.1)).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.499_915_958_164_528).abs() < 1e-12);
        assert!(binary_entropy(1.5).is_err());
    }
}
