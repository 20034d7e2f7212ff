//! Decoy-state estimation of single-photon and vacuum contributions.
//!
//! Observed counts are converted to expected-value bounds with
//! [`chernoff_expected_bounds`]; expected-value products are converted back
//! to observed bounds with [`chernoff_observed_bounds`]. Every distinct
//! bounded quantity is registered in a [`BoundLedger`] so the number of
//! concentration-bound invocations entering the ε budget is explicit.
//!
//! Notation: `o` is the preserve-vacuum state, `ô` the declare-vacuum state.
//! Where a formula needs "Alice sent vacuum" without qualification both
//! vacuum settings are pooled.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::{Intensity, SourceConfig};
use crate::error::{Error, Result};
use crate::matching::{XSlices, ZMatchCounts};
use crate::stats::{chernoff_expected_bounds, chernoff_observed_bounds, sampling_gap, FailureProb};

use Intensity::{Decoy as Nu, DeclareVacuum as OHat, PreserveVacuum as O, Signal as Mu};

/// Error rate of pure background counts.
pub const BACKGROUND_ERROR: f64 = 0.5;

/// Detection statistics consumed by the estimators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservedCounts {
    /// Detections per intensity pair, indexed `[alice][bob]` by
    /// [`Intensity::index`].
    pub x: [[f64; 4]; 4],
    /// Error count attributed to the pooled declared-vacuum events.
    pub m_oo_d: f64,
    /// X-basis pairs per phase slice and the total error count.
    pub x_slices: XSlices,
}

impl ObservedCounts {
    pub fn get(&self, a: Intensity, b: Intensity) -> f64 {
        self.x[a.index()][b.index()]
    }

    /// `x_ôô + x_ôo + x_oô`.
    pub fn x_oo_d(&self) -> f64 {
        self.get(OHat, OHat) + self.get(OHat, O) + self.get(O, OHat)
    }

    /// Alice vacuum (either kind), Bob `k`.
    fn alice_vacuum(&self, k: Intensity) -> f64 {
        self.get(O, k) + self.get(OHat, k)
    }

    /// Alice `k`, Bob vacuum (either kind).
    fn bob_vacuum(&self, k: Intensity) -> f64 {
        self.get(k, O) + self.get(k, OHat)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !self.x.iter().flatten().all(|&v| ok(v)) || !ok(self.m_oo_d) {
            return Err(Error::Parameter("observed counts must be nonnegative".into()));
        }
        let s = &self.x_slices;
        if s.pairs.len() != s.gains.len() || !s.pairs.iter().all(|&v| ok(v)) || !ok(s.errors) {
            return Err(Error::Parameter("malformed X-basis slice data".into()));
        }
        if s.errors > s.total_pairs() * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "X-basis errors {} exceed matched pairs {}",
                s.errors,
                s.total_pairs()
            )));
        }
        Ok(())
    }
}

/// Records which quantities have been passed through a concentration bound.
///
/// A quantity bounded more than once in the same direction is counted once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BoundLedger {
    keys: BTreeSet<&'static str>,
}

impl BoundLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn uses(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.keys.iter().copied()
    }

    fn expected_lower(&mut self, key: &'static str, x: f64, eps: FailureProb) -> Result<f64> {
        self.keys.insert(key);
        Ok(chernoff_expected_bounds(x, eps)?.lower)
    }

    fn expected_upper(&mut self, key: &'static str, x: f64, eps: FailureProb) -> Result<f64> {
        self.keys.insert(key);
        Ok(chernoff_expected_bounds(x, eps)?.upper)
    }

    fn observed_lower(&mut self, key: &'static str, x: f64, eps: FailureProb) -> Result<f64> {
        self.keys.insert(key);
        Ok(chernoff_observed_bounds(x, eps)?.lower)
    }

    fn observed_upper(&mut self, key: &'static str, x: f64, eps: FailureProb) -> Result<f64> {
        self.keys.insert(key);
        Ok(chernoff_observed_bounds(x, eps)?.upper)
    }
}

/// Result of the full estimation chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub y10_lower: f64,
    pub y01_lower: f64,
    pub s0mu_z_lower: f64,
    pub s11_z_lower: f64,
    pub s11_x_lower: f64,
    pub t11_x_upper: f64,
    pub e11_x_upper: f64,
    pub phi11_z_upper: f64,
    pub failure_uses: usize,
    /// Clamps and regularizations applied along the way.
    pub notes: Vec<String>,
}

fn positive(name: &str, p: f64) -> Result<f64> {
    if p > 0.0 {
        Ok(p)
    } else {
        Err(Error::Parameter(format!("{name} must be positive for decoy estimation")))
    }
}

/// Selection probability of the pooled declared-vacuum events.
pub fn p_oo_d(a: &SourceConfig, b: &SourceConfig) -> f64 {
    a.p_ohat * b.p_ohat + a.p_ohat * b.p_o + a.p_o * b.p_ohat
}

/// Lower bounds on the single-photon yields `(y10, y01)`.
pub fn yields_lower(
    obs: &ObservedCounts,
    a: &SourceConfig,
    b: &SourceConfig,
    n: f64,
    eps: FailureProb,
    ledger: &mut BoundLedger,
) -> Result<(f64, f64)> {
    obs.validate()?;
    let pd = positive("declared-vacuum probability", p_oo_d(a, b))?;
    let xd_up = ledger.expected_upper("x_oo_d upper", obs.x_oo_d(), eps)? / pd;

    let y01 = {
        let (mu, nu) = (b.mu, b.nu);
        let t1 = nu.exp() * ledger.expected_lower("x_o,nu lower", obs.alice_vacuum(Nu), eps)?
            / (positive("Alice vacuum probability", a.p_vacuum())? * positive("Bob p_nu", b.p_nu)?);
        let t2 = nu * nu / (mu * mu) * mu.exp()
            * ledger.expected_upper("x_ohat,mu upper", obs.get(OHat, Mu), eps)?
            / (positive("Alice p_ohat", a.p_ohat)? * positive("Bob p_mu", b.p_mu)?);
        let t3 = (mu * mu - nu * nu) / (mu * mu) * xd_up;
        mu / (n * (mu * nu - nu * nu)) * (t1 - t2 - t3)
    };
    let y10 = {
        let (mu, nu) = (a.mu, a.nu);
        let t1 = nu.exp() * ledger.expected_lower("x_nu,o lower", obs.bob_vacuum(Nu), eps)?
            / (positive("Alice p_nu", a.p_nu)? * positive("Bob vacuum probability", b.p_vacuum())?);
        let t2 = nu * nu / (mu * mu) * mu.exp()
            * ledger.expected_upper("x_mu,ohat upper", obs.get(Mu, OHat), eps)?
            / (positive("Alice p_mu", a.p_mu)? * positive("Bob p_ohat", b.p_ohat)?);
        let t3 = (mu * mu - nu * nu) / (mu * mu) * xd_up;
        mu / (n * (mu * nu - nu * nu)) * (t1 - t2 - t3)
    };
    Ok((y10.max(0.0), y01.max(0.0)))
}

fn x_max(obs: &ObservedCounts) -> f64 {
    let x0 = obs.get(O, Mu) + obs.get(O, O);
    let x1 = obs.get(Mu, O) + obs.get(Mu, Mu);
    x0.max(x1)
}

/// Lower bound on single-photon pairs in the Z basis, `φ^L(z10 z01 / x_max)`.
#[allow(clippy::too_many_arguments)]
pub fn s11_z_lower(
    y10: f64,
    y01: f64,
    obs: &ObservedCounts,
    a: &SourceConfig,
    b: &SourceConfig,
    n: f64,
    eps: FailureProb,
    ledger: &mut BoundLedger,
) -> Result<f64> {
    let z10 = n * a.p_mu * b.p_o * a.mu * (-a.mu).exp() * y10;
    let z01 = n * a.p_o * b.p_mu * b.mu * (-b.mu).exp() * y01;
    let xm = x_max(obs);
    let expected = if xm > 0.0 { z10 * z01 / xm } else { 0.0 };
    ledger.observed_lower("s11_z", expected, eps)
}

/// Lower bound on Z-basis pairs in which Alice emitted vacuum in both bins.
pub fn s0mu_z_lower(
    obs: &ObservedCounts,
    a: &SourceConfig,
    b: &SourceConfig,
    z: &ZMatchCounts,
    eps: FailureProb,
    ledger: &mut BoundLedger,
) -> Result<f64> {
    let pd = positive("declared-vacuum probability", p_oo_d(a, b))?;
    let damp = (-a.mu).exp();
    let xd_lo = ledger.expected_lower("x_oo_d lower", obs.x_oo_d(), eps)?;
    let x_ohat_mu_lo = ledger.expected_lower("x_ohat,mu lower", obs.get(OHat, Mu), eps)?;
    let x_o_mu_lo = a.p_o * x_ohat_mu_lo / positive("Alice p_ohat", a.p_ohat)?;
    let z00 = a.p_mu * b.p_o * damp * xd_lo / pd;
    let z0mu = if a.p_o > 0.0 && b.p_mu > 0.0 {
        a.p_mu * b.p_mu * damp * x_o_mu_lo / (a.p_o * b.p_mu)
    } else {
        0.0
    };
    let (x_mu_o, x_mu_mu) = (obs.get(Mu, O), obs.get(Mu, Mu));
    let mut expected = 0.0;
    if x_mu_o > 0.0 {
        expected += z.n_c * z00 / x_mu_o;
    }
    if x_mu_mu > 0.0 {
        expected += z.n_e * z0mu / x_mu_mu;
    }
    ledger.observed_lower("s0_z", expected, eps)
}

/// `Σ_m n^m (f / q^m)²`, the slice-weighted second moment used by the X
/// estimators.
fn slice_sum(slices: &XSlices, f: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (&pairs, &q) in slices.pairs.iter().zip(&slices.gains) {
        if pairs == 0.0 {
            continue;
        }
        if q <= 0.0 {
            return Err(Error::Inconsistent(format!(
                "slice with {pairs} pairs has zero gain"
            )));
        }
        sum += pairs * (f / q) * (f / q);
    }
    Ok(sum)
}

/// Lower bound on single-photon pairs in the X basis.
pub fn s11_x_lower(
    slices: &XSlices,
    y10: f64,
    y01: f64,
    a: &SourceConfig,
    b: &SourceConfig,
    eps: FailureProb,
    ledger: &mut BoundLedger,
) -> Result<f64> {
    let damp = (-a.nu - b.nu).exp();
    let mut expected = 0.0;
    for (&pairs, &q) in slices.pairs.iter().zip(&slices.gains) {
        if pairs == 0.0 {
            continue;
        }
        if q <= 0.0 {
            return Err(Error::Inconsistent(format!("slice with {pairs} pairs has zero gain")));
        }
        expected += pairs * 2.0 * (a.nu * damp * y10 / q) * (b.nu * damp * y01 / q);
    }
    ledger.observed_lower("s11_x", expected, eps)
}

/// Whether the symmetric vacuum-yield estimate applies.
pub fn is_symmetric_setting(a: &SourceConfig, b: &SourceConfig, channel_symmetric: bool) -> bool {
    channel_symmetric && a.nu == b.nu && a.p_nu == b.p_nu && a.p_vacuum() == b.p_vacuum()
}

/// Upper bound on X-basis errors of single-photon pairs,
/// `m_{2ν,2ν} − φ^L(m_{0,2ν}* + m_{2ν,0}*) + φ^U(m_{0,0}*)`.
#[allow(clippy::too_many_arguments)]
pub fn t11_x_upper(
    obs: &ObservedCounts,
    a: &SourceConfig,
    b: &SourceConfig,
    n: f64,
    symmetric: bool,
    eps: FailureProb,
    ledger: &mut BoundLedger,
    notes: &mut Vec<String>,
) -> Result<f64> {
    let slices = &obs.x_slices;
    let (q0v, qv0) = if symmetric {
        let pooled = obs.alice_vacuum(Nu) + obs.bob_vacuum(Nu);
        let lo = ledger.expected_lower("x_o,nu + x_nu,o lower", pooled, eps)?;
        let q = lo / (2.0 * n * positive("vacuum probability", a.p_vacuum())? * positive("p_nu", b.p_nu)?);
        (q, q)
    } else {
        let lo_0v = ledger.expected_lower("x_o,nu lower", obs.alice_vacuum(Nu), eps)?;
        let lo_v0 = ledger.expected_lower("x_nu,o lower", obs.bob_vacuum(Nu), eps)?;
        (
            lo_0v / (n * positive("Alice vacuum probability", a.p_vacuum())? * positive("Bob p_nu", b.p_nu)?),
            lo_v0 / (n * positive("Alice p_nu", a.p_nu)? * positive("Bob vacuum probability", b.p_vacuum())?),
        )
    };
    let m_vac = BACKGROUND_ERROR
        * (slice_sum(slices, (-a.nu).exp() * q0v)? + slice_sum(slices, (-b.nu).exp() * qv0)?);
    let m_vac_lo = ledger.observed_lower("m_vac", m_vac, eps)?;

    let pd = positive("declared-vacuum probability", p_oo_d(a, b))?;
    let q00 = ledger.expected_upper("m_oo_d upper", obs.m_oo_d, eps)? / (n * pd);
    let m00 = BACKGROUND_ERROR * slice_sum(slices, (-a.nu - b.nu).exp() * q00)?;
    let m00_up = ledger.observed_upper("m_00", m00, eps)?;

    let t = slices.errors - m_vac_lo + m00_up;
    if t < 0.0 {
        notes.push(format!("t11_x clamped at 0 from {t}"));
    }
    Ok(t.max(0.0))
}

/// Upper bound on the Z-basis phase error of single-photon pairs,
/// `e11 + γ^U(s11_z, s11_x, e11, ε)`.
///
/// Inputs outside the sampling-gap domain are regularized (with a note)
/// rather than rejected so that optimizers can cross infeasible regions.
pub fn phi11_z_upper(
    s11_z: f64,
    s11_x: f64,
    e11_x: f64,
    eps: FailureProb,
    notes: &mut Vec<String>,
) -> Result<f64> {
    if s11_z < 1.0 || s11_x < 1.0 {
        notes.push(format!("single-photon counts below 1 (z={s11_z}, x={s11_x}); phase error set to 0.5"));
        return Ok(0.5f64.max(e11_x).min(1.0));
    }
    let floor = 1.0 / s11_x.max(2.0);
    let lam = e11_x.clamp(floor, 1.0 - floor);
    if lam != e11_x {
        notes.push(format!("e11_x regularized from {e11_x} to {lam} for the sampling gap"));
    }
    let gamma = sampling_gap(s11_z, s11_x, lam, eps)?;
    Ok((e11_x + gamma).min(1.0))
}

/// Runs the full estimation chain.
#[allow(clippy::too_many_arguments)]
pub fn estimate(
    obs: &ObservedCounts,
    a: &SourceConfig,
    b: &SourceConfig,
    n: f64,
    z: &ZMatchCounts,
    symmetric: bool,
    eps: FailureProb,
) -> Result<DecoyBounds> {
    let mut ledger = BoundLedger::new();
    let mut notes = Vec::new();
    let (y10, y01) = yields_lower(obs, a, b, n, eps, &mut ledger)?;
    if y10 == 0.0 || y01 == 0.0 {
        notes.push("single-photon yield clamped at 0".into());
    }
    let s11_z = s11_z_lower(y10, y01, obs, a, b, n, eps, &mut ledger)?;
    let s0 = s0mu_z_lower(obs, a, b, z, eps, &mut ledger)?;
    let s11_x = s11_x_lower(&obs.x_slices, y10, y01, a, b, eps, &mut ledger)?;
    let t11 = t11_x_upper(obs, a, b, n, symmetric, eps, &mut ledger, &mut notes)?;
    let e11 = if s11_x > 0.0 { (t11 / s11_x).min(1.0) } else { 1.0 };
    let phi = phi11_z_upper(s11_z, s11_x, e11, eps, &mut notes)?;
    Ok(DecoyBounds {
        y10_lower: y10,
        y01_lower: y01,
        s0mu_z_lower: s0,
        s11_z_lower: s11_z,
        s11_x_lower: s11_x,
        t11_x_upper: t11,
        e11_x_upper: e11,
        phi11_z_upper: phi,
        failure_uses: ledger.uses(),
        notes,
    })
}
