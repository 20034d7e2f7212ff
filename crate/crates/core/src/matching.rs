//! Post-matching statistics.
//!
//! Z-basis pairs combine a bin where Alice sent `μ` with one where she sent
//! the preserve-vacuum `o` (and likewise for Bob). X-basis pairs combine two
//! `{ν_a, ν_b}` detections whose phase differences fall in the same phase
//! class. In arbitrary-time matching every detection of the run is available
//! for pairing. In short-term matching pairing happens inside windows of
//! `N_Tc = T_c·F` bins and only case-1 detections (those with another
//! detection within `N_Tc - 1` bins) are kept.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::ClickModel;
use crate::error::{ensure, finite, Error, Result};
use crate::special::periodic_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    Arbitrary,
    #[serde(alias = "short")]
    ShortTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchingConfig {
    pub mode: MatchingMode,
    /// System repetition rate in Hz.
    pub rep_rate: f64,
    /// Matching window `T_c` in seconds.
    pub window: f64,
    /// Number of phase slices `M`.
    pub slices: usize,
    /// Static X-basis misalignment in radians.
    pub sigma: f64,
    /// Abort threshold on the number of case-2 events.
    pub abort_threshold: u32,
}

impl MatchingConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.rep_rate > 0.0 && self.rep_rate.is_finite(), || {
            format!("repetition rate must be positive, got {}", self.rep_rate)
        })?;
        ensure(self.window > 0.0 && self.window.is_finite(), || {
            format!("matching window must be positive, got {}", self.window)
        })?;
        ensure(self.slices >= 2 && self.slices.is_multiple_of(2), || {
            format!("slice count must be even and >= 2, got {}", self.slices)
        })?;
        ensure((0.0..PI).contains(&self.sigma), || {
            format!("misalignment must lie in [0, pi), got {}", self.sigma)
        })?;
        ensure(self.bins_per_window() >= 1.0, || {
            format!("window holds {} bins; need at least 1", self.bins_per_window())
        })
    }

    /// `N_Tc = T_c·F`.
    pub fn bins_per_window(&self) -> f64 {
        self.window * self.rep_rate
    }
}

/// Expected Z-basis intensity-pair counts. `o` is the preserve-vacuum state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZBasisCounts {
    pub mu_o: f64,
    pub o_mu: f64,
    pub mu_mu: f64,
    pub o_o: f64,
}

impl ZBasisCounts {
    fn validate(&self) -> Result<()> {
        let all = [self.mu_o, self.o_mu, self.mu_mu, self.o_o];
        ensure(all.iter().all(|x| x.is_finite() && *x >= 0.0), || {
            format!("Z-basis counts must be nonnegative, got {all:?}")
        })
    }

    /// Detections where Alice sent `o`: `x₀ = x_oμ + x_oo`.
    pub fn x0(&self) -> f64 {
        self.o_mu + self.o_o
    }

    /// Detections where Alice sent `μ`: `x₁ = x_μo + x_μμ`.
    pub fn x1(&self) -> f64 {
        self.mu_o + self.mu_mu
    }

    pub fn x_max(&self) -> f64 {
        self.x0().max(self.x1())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZMatchCounts {
    pub n_c: f64,
    pub n_e: f64,
    pub n_z: f64,
    pub e_z: f64,
}

impl ZMatchCounts {
    pub fn from_parts(n_c: f64, n_e: f64) -> Self {
        let n_z = n_c + n_e;
        let e_z = if n_z > 0.0 { n_e / n_z } else { 0.0 };
        Self { n_c, n_e, n_z, e_z }
    }
}

/// Correct pairs `x_oμ x_μo / x_max` and error pairs `x_oo x_μμ / x_max`.
pub fn z_match_arbitrary(c: &ZBasisCounts) -> Result<ZMatchCounts> {
    c.validate()?;
    let x_max = c.x_max();
    if x_max == 0.0 {
        return Ok(ZMatchCounts::default());
    }
    Ok(ZMatchCounts::from_parts(c.o_mu * c.mu_o / x_max, c.o_o * c.mu_mu / x_max))
}

/// Short-term matching over `windows` statistically identical windows.
pub fn z_match_short(per_window: &ZBasisCounts, windows: f64) -> Result<ZMatchCounts> {
    ensure(windows >= 1.0 && windows.is_finite(), || {
        format!("window count must be >= 1, got {windows}")
    })?;
    let one = z_match_arbitrary(per_window)?;
    Ok(ZMatchCounts::from_parts(one.n_c * windows, one.n_e * windows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseProbabilities {
    pub p_c1: f64,
    pub p_c2: f64,
    /// Expected number of case-2 detections in the run.
    pub expected_case2: f64,
}

/// Case-1/case-2 probabilities of a detection given the mean per-bin
/// detection probability `p_bar`.
pub fn case_probabilities(p_bar: f64, bins_per_window: f64, total_bins: f64) -> Result<CaseProbabilities> {
    ensure((0.0..=1.0).contains(&p_bar), || {
        format!("mean detection probability must lie in [0, 1], got {p_bar}")
    })?;
    ensure(bins_per_window >= 1.0, || {
        format!("window must hold at least one bin, got {bins_per_window}")
    })?;
    ensure(total_bins >= 0.0, || format!("bin count must be nonnegative, got {total_bins}"))?;
    let exponent = 2.0 * bins_per_window - 2.0;
    let p_c2 = if exponent == 0.0 {
        1.0
    } else {
        (exponent * (-p_bar).ln_1p()).exp()
    };
    Ok(CaseProbabilities {
        p_c1: 1.0 - p_c2,
        p_c2,
        expected_case2: total_bins * p_c2 * p_bar,
    })
}

/// `λ - (1 - e^{-2λ})/2`, computed without cancellation for small `λ`.
fn pairing_core(lambda: f64) -> f64 {
    if lambda < 0.05 {
        // Σ_{k≥2} (-1)^k (2λ)^k / (2·k!)
        let x = 2.0 * lambda;
        let mut term = x * x / 2.0;
        let mut sum = term;
        let mut k = 3.0;
        while k < 30.0 {
            term *= -x / k;
            sum += term;
            k += 1.0;
        }
        sum / 2.0
    } else {
        lambda + (-2.0 * lambda).exp_m1() / 2.0
    }
}

/// `(1/M)[λ - (1 - e^{-2λ})/2]`.
///
/// This is `(2/M)·E⌊X/2⌋` for `X ~ Poisson(λ)`: the pairs formed from a
/// Poisson pool of mean `λ`, with the odd leftover discarded, attributed to
/// one of the `M/2` phase classes.
pub fn pair_yield_poisson(lambda: f64, slices: usize) -> Result<f64> {
    ensure(lambda >= 0.0 && lambda.is_finite(), || {
        format!("pool mean must be finite and nonnegative, got {lambda}")
    })?;
    ensure(slices >= 1, || "slice count must be positive".into())?;
    Ok(pairing_core(lambda) / slices as f64)
}

/// `E⌊X/2⌋` for `X ~ Poisson(λ)`: pairs formed by pairing off a pool.
pub fn expected_pairs(lambda: f64) -> f64 {
    pairing_core(lambda.max(0.0)) / 2.0
}

/// Error probability of an X-basis pair whose two bins carry phase
/// difference `phi`, with the second bin rotated by `sigma`.
pub fn pair_error_ratio(m: &ClickModel, phi: f64, sigma: f64) -> f64 {
    let (l1, r1) = (m.q_l(phi), m.q_r(phi));
    let (l2, r2) = (m.q_l(phi + sigma), m.q_r(phi + sigma));
    let den = (l1 + r1) * (l2 + r2);
    if den > 0.0 {
        (l1 * r2 + r1 * l2) / den
    } else {
        0.0
    }
}

/// Expected X-basis error count for arbitrary-time matching,
/// `N p_νa p_νb (1/4π) ∮ [q_L(φ)q_R(φ+σ) + q_R(φ)q_L(φ+σ)] / q(φ+σ) dφ`.
#[allow(clippy::too_many_arguments)]
pub fn x_error_arbitrary(
    model: &ClickModel,
    sigma: f64,
    n: f64,
    p_nu_a: f64,
    p_nu_b: f64,
    nodes: usize,
) -> Result<f64> {
    ensure(nodes >= 8, || format!("need at least 8 quadrature nodes, got {nodes}"))?;
    let integrand = |phi: f64| {
        let q2 = model.q(phi + sigma);
        if q2 > 0.0 {
            (model.q_l(phi) * model.q_r(phi + sigma) + model.q_r(phi) * model.q_l(phi + sigma)) / q2
        } else {
            0.0
        }
    };
    let fine = periodic_mean(nodes, integrand);
    let coarse = periodic_mean(nodes / 2, integrand);
    let scale = fine.abs().max(f64::MIN_POSITIVE);
    if ((fine - coarse) / scale).abs() > 1e-6 {
        return Err(Error::Numeric(format!(
            "X-error quadrature not converged at {nodes} nodes ({fine} vs {coarse})"
        )));
    }
    finite("X-basis error count", n * p_nu_a * p_nu_b * fine / 2.0)
}

/// Expected X-basis error count for short-term matching, given the
/// pairs formed in each of the `M/2` phase classes.
pub fn x_error_short(model: &ClickModel, slices: usize, sigma: f64, pairs: &[f64]) -> Result<f64> {
    ensure(slices >= 2 && slices.is_multiple_of(2), || format!("slice count must be even, got {slices}"))?;
    ensure(pairs.len() == slices / 2, || {
        format!("expected {} class pair counts, got {}", slices / 2, pairs.len())
    })?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(j, n)| n * pair_error_ratio(model, 2.0 * PI * j as f64 / slices as f64, sigma))
        .sum())
}

/// X-basis pair statistics resolved by phase slice.
///
/// `pairs[m]` is the expected number of matched pairs whose phase
/// difference lies in slice `m` and `gains[m]` is the `{ν_a, ν_b}` gain at
/// that slice's phase. `errors` is the total expected error count.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct XSlices {
    pub phases: Vec<f64>,
    pub pairs: Vec<f64>,
    pub gains: Vec<f64>,
    pub errors: f64,
}

impl XSlices {
    pub fn total_pairs(&self) -> f64 {
        self.pairs.iter().sum()
    }

    /// Slices of arbitrary-time matching: `M` slices with
    /// `N p p q(φ_m) / (2M)` pairs each.
    #[allow(clippy::too_many_arguments)]
    pub fn arbitrary(
        model: &ClickModel,
        n: f64,
        p_nu_a: f64,
        p_nu_b: f64,
        slices: usize,
        sigma: f64,
        nodes: usize,
    ) -> Result<Self> {
        let phases: Vec<f64> = (0..slices).map(|j| 2.0 * PI * j as f64 / slices as f64).collect();
        let gains: Vec<f64> = phases.iter().map(|&p| model.q(p)).collect();
        let pairs = gains
            .iter()
            .map(|q| n * p_nu_a * p_nu_b * q / (2.0 * slices as f64))
            .collect();
        let errors = x_error_arbitrary(model, sigma, n, p_nu_a, p_nu_b, nodes)?;
        Ok(Self { phases, pairs, gains, errors })
    }

    /// Phase classes of short-term matching. Each window pairs the case-1
    /// `{ν_a, ν_b}` detections of every class among themselves.
    #[allow(clippy::too_many_arguments)]
    pub fn short_term(
        model: &ClickModel,
        bins_per_window: f64,
        p_c1: f64,
        windows: f64,
        p_nu_a: f64,
        p_nu_b: f64,
        slices: usize,
        sigma: f64,
    ) -> Result<Self> {
        let classes = slices / 2;
        let phases: Vec<f64> = (0..classes).map(|j| 2.0 * PI * j as f64 / slices as f64).collect();
        let gains: Vec<f64> = phases.iter().map(|&p| model.q(p)).collect();
        let mut pairs = Vec::with_capacity(classes);
        for q in &gains {
            let lambda = bins_per_window * p_c1 * p_nu_a * p_nu_b * q / classes as f64;
            pairs.push(windows * slices as f64 / 2.0 * pair_yield_poisson(lambda, slices)?);
        }
        let errors = x_error_short(model, slices, sigma, &pairs)?;
        Ok(Self { phases, pairs, gains, errors })
    }
}
