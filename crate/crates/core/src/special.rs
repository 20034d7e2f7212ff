//! Special functions and periodic quadrature.

use std::f64::consts::PI;

/// Modified Bessel function of the first kind, order zero.
///
/// Power series `Σ (x²/4)^k / (k!)²`. Every term is positive so there is no
/// cancellation; relative accuracy is near machine precision for
/// `|x| ≤ 10`, which covers every interference argument arising here
/// (`ω = √(η_a k_a η_b k_b) ≤ 1`). Larger arguments still converge but need
/// more terms.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while k < 1000.0 {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// `I₀(x) − 1`, accurate for small `x` where the subtraction would cancel.
pub fn bessel_i0_m1(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = q;
    let mut sum = q;
    let mut k = 2.0;
    while k < 1000.0 && term > 0.0 {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Mean of a 2π-periodic function by the `nodes`-point trapezoid rule.
///
/// Exponentially convergent for smooth periodic integrands.
pub fn periodic_mean(nodes: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    assert!(nodes > 0, "periodic_mean needs at least one node");
    let h = 2.0 * PI / nodes as f64;
    (0..nodes).map(|j| f(h * j as f64)).sum::<f64>() / nodes as f64
}
