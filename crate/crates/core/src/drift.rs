//! Phase evolution between the two users and the misalignment it causes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Which phase-stabilization techniques are in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Phase tracking and phase locking both active.
    TrackedLocked,
    /// Lasers locked; fiber drift left uncompensated.
    LockedOnly,
    /// Neither technique.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// Stabilization in use; selects which drift terms enter the misalignment.
    pub mode: PhaseMode,
    /// Laser frequency difference `δv` in Hz.
    pub delta_v: f64,
    /// Fiber phase drift rate in rad/s.
    pub fiber_drift_rate: f64,
    /// Mean optical frequency in Hz.
    pub optical_frequency: f64,
    /// Speed of light in fiber, m/s.
    pub fiber_light_speed: f64,
    /// Time separation of the two pulses in a HOM calibration, s.
    pub tau: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            mode: PhaseMode::TrackedLocked,
            delta_v: 0.0,
            fiber_drift_rate: 8.0e3,
            optical_frequency: 193.4e12,
            fiber_light_speed: 2.0e8,
            tau: 1e-6,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.delta_v >= 0.0 && self.delta_v.is_finite(), || {
            format!("delta_v must be nonnegative, got {}", self.delta_v)
        })?;
        ensure(self.fiber_drift_rate >= 0.0 && self.fiber_drift_rate.is_finite(), || {
            format!("fiber drift rate must be nonnegative, got {}", self.fiber_drift_rate)
        })?;
        ensure(self.optical_frequency > 0.0 && self.fiber_light_speed > 0.0, || {
            "optical frequency and fiber light speed must be positive".into()
        })?;
        ensure(self.tau >= 0.0, || format!("tau must be nonnegative, got {}", self.tau))
    }
}

/// Differential phase `2π δv t − (2π/s)(δv l + v δl)` at time `t`.
pub fn differential_phase(t: f64, delta_v: f64, l: f64, delta_l: f64, v: f64, s_fiber: f64) -> f64 {
    2.0 * PI * delta_v * t - 2.0 * PI / s_fiber * (delta_v * l + v * delta_l)
}

/// Phase change between bins `i` and `j` with locked lasers:
/// `(2π/s)(v_j δl_j − v_i δl_i)`.
pub fn drift_locked(v_i: f64, v_j: f64, delta_l_i: f64, delta_l_j: f64, s_fiber: f64) -> f64 {
    2.0 * PI / s_fiber * (v_j * delta_l_j - v_i * delta_l_i)
}

/// Accumulated fiber phase drift after `dt` seconds at `rate` rad/s.
pub fn fiber_drift(rate: f64, dt: f64) -> f64 {
    rate * dt
}

/// Phase change `2π δv Δt` between free-running lasers.
pub fn drift_unlocked(delta_v: f64, dt: f64) -> f64 {
    2.0 * PI * delta_v * dt
}

/// Effective X-basis misalignment for a matching window `t_c`.
///
/// Paired bins are on average `t_c/2` apart, so each drift term is taken at
/// half its maximum over the window. Contributions add in angle.
pub fn effective_misalignment(mode: PhaseMode, t_c: f64, drift: &DriftConfig, sigma_base: f64) -> f64 {
    let half = t_c / 2.0;
    match mode {
        PhaseMode::TrackedLocked => sigma_base,
        PhaseMode::LockedOnly => sigma_base + fiber_drift(drift.fiber_drift_rate, half),
        PhaseMode::Free => {
            sigma_base + drift_unlocked(drift.delta_v, half) + fiber_drift(drift.fiber_drift_rate, half)
        }
    }
}

/// Interference error `(1 − cos σ)/2` at a fixed misalignment.
pub fn intrinsic_error(sigma: f64) -> f64 {
    (1.0 - sigma.cos()) / 2.0
}

/// `(1 − cos(φ_max·u))/2` averaged over the separation `|t_i − t_j|` of two
/// bins drawn uniformly in a window, where `φ_max` is the drift accumulated
/// over the full window. Diagnostic only.
pub fn intrinsic_error_window_average(phi_max: f64) -> f64 {
    // Separation density of two uniform points on [0, 1] is 2(1 − u).
    if phi_max == 0.0 {
        return 0.0;
    }
    let a = phi_max;
    let mean_cos = 2.0 * (1.0 - a.cos()) / (a * a);
    (1.0 - mean_cos) / 2.0
}

/// HOM interference of two weak coherent pulses with frequency offset
/// `delta_v` and separation `tau`: `V = 0.5 cos(2π δv τ)`, clamped at zero
/// past the quarter period, and `E = (1 − V)/2`.
pub fn hom_curve(delta_v: f64, tau: f64) -> (f64, f64) {
    let arg = 2.0 * PI * delta_v * tau;
    let v = if arg.abs() <= PI / 2.0 { 0.5 * arg.cos() } else { 0.0 };
    (v, (1.0 - v) / 2.0)
}

/// Expected detections per matching window, `T_c F (1 − e^{−μ̄ η_d √η_ch})`.
pub fn detections_per_window(t_c: f64, rep_rate: f64, mu_bar: f64, eta_d: f64, eta_ch: f64) -> f64 {
    t_c * rep_rate * -(-mu_bar * eta_d * eta_ch.sqrt()).exp_m1()
}
