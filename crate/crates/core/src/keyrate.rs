//! Finite-key length, ε accounting and single-point evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{fiber_transmittance, GainTable, Intensity};
use crate::decoy::{self, DecoyBounds, ObservedCounts, BACKGROUND_ERROR};
use crate::drift::effective_misalignment;
use crate::error::{ensure, finite, Error, Result};
use crate::matching::{
    case_probabilities, z_match_arbitrary, z_match_short, MatchingMode, XSlices, ZBasisCounts,
    ZMatchCounts,
};
use crate::optimizer::abort_probability;
use crate::scenario::Scenario;
use crate::stats::{binary_entropy, FailureProb};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityConfig {
    /// Failure probability shared by every bound and by privacy amplification.
    pub epsilon: FailureProb,
    /// Error-correction inefficiency `f`.
    pub ec_efficiency: f64,
    pub epsilon_cor: FailureProb,
}

impl SecurityConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.ec_efficiency >= 1.0 && self.ec_efficiency.is_finite(), || {
            format!("error-correction efficiency must be >= 1, got {}", self.ec_efficiency)
        })
    }
}

/// Secret key length in bits:
///
/// ```text
/// ℓ = s0 + s11 (1 − H₂(φ)) − n_z f H₂(E_z)
///     − log₂(2/ε_cor) − 2 log₂(2/(ε' ε̂)) − 2 log₂(1/(2 ε_PA))
/// ```
///
/// with `ε' = ε̂ = ε_PA = ε`. The phase error is clamped to `[0, 0.5]`.
pub fn key_length(bounds: &DecoyBounds, n_z: f64, e_z: f64, sec: &SecurityConfig) -> Result<f64> {
    let phi = bounds.phi11_z_upper.clamp(0.0, 0.5);
    let ec = n_z * sec.ec_efficiency * binary_entropy(e_z.clamp(0.0, 1.0))?;
    let ell = bounds.s0mu_z_lower + bounds.s11_z_lower * (1.0 - binary_entropy(phi)?) - ec
        - finite_size_penalty(sec);
    finite("key length", ell)
}

/// The ε-dependent terms subtracted in [`key_length`].
pub fn finite_size_penalty(sec: &SecurityConfig) -> f64 {
    let e = sec.epsilon.value();
    (2.0 / sec.epsilon_cor.value()).log2() + 2.0 * (2.0 / (e * e)).log2() + 2.0 * (1.0 / (2.0 * e)).log2()
}

/// Component-wise failure-probability budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    /// Concentration-bound invocations in parameter estimation.
    pub uses: usize,
    /// `2(ε' + ε̂ + 2ε_e) + ε_β + ε₀ + ε₁ + ε_PA` summed term by term.
    pub eps_sec: f64,
    /// `eps_sec + ε_cor`.
    pub eps_total: f64,
    /// Security level commonly quoted for this ε choice (2.4e-9 symmetric,
    /// 2.3e-9 asymmetric), reported alongside the literal sum because the
    /// two disagree.
    pub quoted_total: f64,
}

pub fn epsilon_budget(symmetric: bool, eps: FailureProb, eps_cor: FailureProb) -> EpsilonBudget {
    let e = eps.value();
    let uses = if symmetric { 14 } else { 13 };
    let eps_sec = 2.0 * (e + e + 2.0 * e) + e + uses as f64 * e + e;
    EpsilonBudget {
        uses,
        eps_sec,
        eps_total: eps_sec + eps_cor.value(),
        quoted_total: if symmetric { 2.4e-9 } else { 2.3e-9 },
    }
}

/// Repeaterless secret-key capacity `−log₂(1 − η)`.
pub fn plob_bound(eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("transmittance must lie in [0, 1], got {eta}")));
    }
    Ok(-(-eta).ln_1p() / std::f64::consts::LN_2)
}

/// Transmittance entering the PLOB comparison for a scenario.
pub fn plob_transmittance(sc: &Scenario) -> f64 {
    let ch = &sc.channel;
    let t = fiber_transmittance(ch.alpha, ch.total_length());
    if sc.run.plob_includes_detector {
        t * ch.eta_d
    } else {
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub ell: f64,
    pub rate_per_pulse: f64,
    pub rate_bps: f64,
    pub lambda_ec: f64,
    pub eps_sec: f64,
    pub eps_total: f64,
    pub expected_case2: f64,
    /// Probability that case-2 events exceed the abort threshold.
    pub abort_probability: f64,
    /// `ℓ > 0` and, for short-term matching, at most one expected case-2
    /// event.
    pub feasible: bool,
    pub plob: f64,
    pub sigma_eff: f64,
    pub z: ZMatchCounts,
    pub bounds: DecoyBounds,
    pub diagnostics: BTreeMap<String, f64>,
}

impl KeyRateResult {
    /// Observed X-basis bit error rate of the matched `{ν, ν}` pairs.
    pub fn e_x(&self) -> f64 {
        self.diagnostics.get("x_error_rate").copied().unwrap_or(0.0)
    }
}

/// Mean per-bin detection probability and expected case-2 count.
pub fn case2_expectation(sc: &Scenario) -> Result<(f64, f64)> {
    let gains = GainTable::new(&sc.source_a, &sc.source_b, &sc.channel);
    let p_bar = gains.mean_detection(&sc.source_a, &sc.source_b);
    match sc.matching.mode {
        MatchingMode::Arbitrary => Ok((p_bar, 0.0)),
        MatchingMode::ShortTerm => {
            let c = case_probabilities(p_bar, sc.matching.bins_per_window(), sc.run.pulses)?;
            Ok((p_bar, c.expected_case2))
        }
    }
}

/// Mean-value observation model: the counts a run would produce on average.
pub struct ExpectedRun {
    pub observed: ObservedCounts,
    pub z: ZMatchCounts,
    pub p_bar: f64,
    pub p_c1: f64,
    pub expected_case2: f64,
    pub sigma_eff: f64,
    pub windows: f64,
}

/// Expected detection statistics of a scenario.
pub fn expected_run(sc: &Scenario) -> Result<ExpectedRun> {
    sc.validate()?;
    let (a, b, mt) = (&sc.source_a, &sc.source_b, &sc.matching);
    let n = sc.run.pulses;
    let gains = GainTable::new(a, b, &sc.channel);
    let p_bar = gains.mean_detection(a, b);
    let n_tc = mt.bins_per_window();
    let windows = n / n_tc;
    let (p_c1, expected_case2) = match mt.mode {
        MatchingMode::Arbitrary => (1.0, 0.0),
        MatchingMode::ShortTerm => {
            ensure(windows >= 1.0, || {
                format!("run of {n} pulses is shorter than one matching window")
            })?;
            let c = case_probabilities(p_bar, n_tc, n)?;
            (c.p_c1, c.expected_case2)
        }
    };
    let (pa, pb) = (a.probabilities(), b.probabilities());
    let mut x = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            x[i][j] = n * p_c1 * pa[i] * pb[j] * gains.gains[i][j];
        }
    }
    use Intensity::{PreserveVacuum as O, Signal as Mu};
    let zc = |scale: f64| ZBasisCounts {
        mu_o: x[Mu.index()][O.index()] * scale,
        o_mu: x[O.index()][Mu.index()] * scale,
        mu_mu: x[Mu.index()][Mu.index()] * scale,
        o_o: x[O.index()][O.index()] * scale,
    };
    let z = match mt.mode {
        MatchingMode::Arbitrary => z_match_arbitrary(&zc(1.0))?,
        MatchingMode::ShortTerm => z_match_short(&zc(1.0 / windows), windows)?,
    };
    let sigma_eff = effective_misalignment(sc.drift.mode, mt.window, &sc.drift, mt.sigma);
    let model = *gains.model(Intensity::Decoy, Intensity::Decoy);
    let x_slices = match mt.mode {
        MatchingMode::Arbitrary => {
            XSlices::arbitrary(&model, n, a.p_nu, b.p_nu, mt.slices, sigma_eff, sc.run.quadrature_nodes)?
        }
        MatchingMode::ShortTerm => {
            XSlices::short_term(&model, n_tc, p_c1, windows, a.p_nu, b.p_nu, mt.slices, sigma_eff)?
        }
    };
    let mut observed = ObservedCounts { x, m_oo_d: 0.0, x_slices };
    observed.m_oo_d = BACKGROUND_ERROR * observed.x_oo_d();
    Ok(ExpectedRun { observed, z, p_bar, p_c1, expected_case2, sigma_eff, windows })
}

/// Key rate of a fully specified scenario.
pub fn evaluate(sc: &Scenario) -> Result<KeyRateResult> {
    let run = expected_run(sc)?;
    let (a, b) = (&sc.source_a, &sc.source_b);
    let n = sc.run.pulses;
    let symmetric = decoy::is_symmetric_setting(a, b, sc.channel.is_symmetric());
    let bounds = decoy::estimate(&run.observed, a, b, n, &run.z, symmetric, sc.security.epsilon)?;
    let ell = key_length(&bounds, run.z.n_z, run.z.e_z, &sc.security)?;
    let lambda_ec = run.z.n_z * sc.security.ec_efficiency * binary_entropy(run.z.e_z.clamp(0.0, 1.0))?;
    let budget = epsilon_budget(symmetric, sc.security.epsilon, sc.security.epsilon_cor);
    let rate_per_pulse = ell.max(0.0) / n;
    let short = sc.matching.mode == MatchingMode::ShortTerm;
    let case2_ok = !short || run.expected_case2 <= 1.0;
    let abort = if short {
        abort_probability(run.expected_case2, sc.matching.abort_threshold)?
    } else {
        0.0
    };
    let plob = plob_bound(plob_transmittance(sc))?;

    let xs = &run.observed.x_slices;
    let pairs = xs.total_pairs();
    let mut d = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        d.insert(k.to_string(), v);
    };
    put("p_bar", run.p_bar);
    put("p_c1", run.p_c1);
    put("windows", run.windows);
    put("y10_lower", bounds.y10_lower);
    put("y01_lower", bounds.y01_lower);
    put("s0mu_z_lower", bounds.s0mu_z_lower);
    put("s11_z_lower", bounds.s11_z_lower);
    put("s11_x_lower", bounds.s11_x_lower);
    put("t11_x_upper", bounds.t11_x_upper);
    put("e11_x_upper", bounds.e11_x_upper);
    put("phi11_z_upper", bounds.phi11_z_upper);
    put("n_c", run.z.n_c);
    put("n_e", run.z.n_e);
    put("n_z", run.z.n_z);
    put("e_z", run.z.e_z);
    put("x_pairs", pairs);
    put("x_errors", xs.errors);
    put("x_error_rate", if pairs > 0.0 { xs.errors / pairs } else { 0.0 });
    put("finite_size_penalty", finite_size_penalty(&sc.security));
    put("quoted_eps_total", budget.quoted_total);

    Ok(KeyRateResult {
        ell,
        rate_per_pulse,
        rate_bps: rate_per_pulse * sc.matching.rep_rate,
        lambda_ec,
        eps_sec: budget.eps_sec,
        eps_total: budget.eps_total,
        expected_case2: run.expected_case2,
        abort_probability: abort,
        feasible: ell > 0.0 && case2_ok,
        plob,
        sigma_eff: run.sigma_eff,
        z: run.z,
        bounds,
        diagnostics: d,
    })
}
