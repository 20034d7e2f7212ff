//! Complete scenario description and the JSON scenario-file format.
//!
//! A scenario file is a JSON object with exactly the sections `source_a`,
//! `source_b`, `channel`, `matching`, `drift`, `security`, `optimizer` and
//! `run`. Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, SourceConfig};
use crate::drift::{DriftConfig, PhaseMode};
use crate::error::{ensure, Error, Result};
use crate::keyrate::SecurityConfig;
use crate::matching::{MatchingConfig, MatchingMode};
use crate::stats::FailureProb;

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 0x5EED_A5D1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub population: usize,
    pub generations: usize,
    /// Search interval for the signal intensities.
    pub mu: [f64; 2],
    /// Search interval for the decoy intensities.
    pub nu: [f64; 2],
    /// Give both users the same parameters.
    pub tie_users: bool,
    /// Seed each scan point's population with the previous optimum.
    pub warm_start: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            population: 64,
            generations: 200,
            mu: [0.05, 3.0],
            nu: [0.001, 0.5],
            tie_users: true,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Total number of time bins `N`.
    pub pulses: f64,
    /// Trapezoid nodes for continuous phase integrals.
    pub quadrature_nodes: usize,
    /// Multiply the PLOB transmittance by the detector efficiency.
    pub plob_includes_detector: bool,
    /// Pulses simulated by the Monte Carlo oracle.
    pub mc_pulses: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { pulses: 1e12, quadrature_nodes: 1024, plob_includes_detector: true, mc_pulses: 100_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub source_a: SourceConfig,
    pub source_b: SourceConfig,
    pub channel: ChannelConfig,
    pub matching: MatchingConfig,
    pub drift: DriftConfig,
    pub security: SecurityConfig,
    pub optimizer: OptimizerConfig,
    pub run: RunConfig,
}

/// Intensities and probabilities used when a scenario is evaluated without
/// optimization.
pub const DEFAULT_SOURCE: SourceConfig =
    SourceConfig { mu: 0.45, nu: 0.03, p_mu: 0.22, p_nu: 0.22, p_o: 0.53, p_ohat: 0.03 };

impl Scenario {
    /// Standard detector, fiber and security parameters: `η_d = 0.7`,
    /// `p_d = 1e-8`, 0.165 dB/km, `f = 1.1`, `ε = 36/23·1e-10`, with a
    /// symmetric channel of total length `distance_km`.
    pub fn standard(distance_km: f64, matching: MatchingConfig) -> Self {
        let eps = FailureProb::new(36.0 / 23.0 * 1e-10).expect("constant in range");
        Self {
            source_a: DEFAULT_SOURCE,
            source_b: DEFAULT_SOURCE,
            channel: ChannelConfig {
                l_a: distance_km / 2.0,
                l_b: distance_km / 2.0,
                alpha: 0.165,
                eta_d: 0.7,
                p_d: 1e-8,
            },
            matching,
            drift: DriftConfig::default(),
            security: SecurityConfig { epsilon: eps, ec_efficiency: 1.1, epsilon_cor: eps },
            optimizer: OptimizerConfig::default(),
            run: RunConfig::default(),
        }
    }

    /// Short-term matching with phase tracking removed: 1 GHz, 50 μs window,
    /// σ = π/10, N = 1e12.
    pub fn no_tracking(distance_km: f64) -> Self {
        let mut s = Self::standard(
            distance_km,
            MatchingConfig {
                mode: MatchingMode::ShortTerm,
                rep_rate: 1e9,
                window: 50e-6,
                slices: 16,
                sigma: std::f64::consts::PI / 10.0,
                abort_threshold: 10,
            },
        );
        s.drift.mode = PhaseMode::TrackedLocked;
        s
    }

    /// Short-term matching with neither tracking nor locking. The
    /// misalignment comes from the laser offset `delta_v` plus, if
    /// `fiber_drift_rate > 0`, fiber drift.
    pub fn free_running(distance_km: f64, rep_rate: f64, window: f64, delta_v: f64, fiber_drift_rate: f64) -> Self {
        let mut s = Self::standard(
            distance_km,
            MatchingConfig {
                mode: MatchingMode::ShortTerm,
                rep_rate,
                window,
                slices: 16,
                sigma: 0.0,
                abort_threshold: 10,
            },
        );
        s.drift.mode = PhaseMode::Free;
        s.drift.delta_v = delta_v;
        s.drift.fiber_drift_rate = fiber_drift_rate;
        s
    }

    /// Arbitrary-time matching with tracking and locking, σ = π/36.
    pub fn arbitrary(distance_km: f64, pulses: f64) -> Self {
        let mut s = Self::standard(
            distance_km,
            MatchingConfig {
                mode: MatchingMode::Arbitrary,
                rep_rate: 1e9,
                window: 1.0,
                slices: 16,
                sigma: std::f64::consts::PI / 36.0,
                abort_threshold: 10,
            },
        );
        s.run.pulses = pulses;
        s
    }

    /// Same scenario with the total fiber length set to `distance_km`,
    /// keeping the current `l_b − l_a` offset.
    pub fn at_distance(&self, distance_km: f64) -> Self {
        let offset = self.channel.l_b - self.channel.l_a;
        let mut s = *self;
        s.channel.l_a = ((distance_km - offset) / 2.0).max(0.0);
        s.channel.l_b = s.channel.l_a + offset;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.source_a.validate()?;
        self.source_b.validate()?;
        self.channel.validate()?;
        self.matching.validate()?;
        self.drift.validate()?;
        self.security.validate()?;
        let o = &self.optimizer;
        ensure(o.population >= 4, || format!("population must be >= 4, got {}", o.population))?;
        ensure(
            o.mu[0] > 0.0 && o.mu[0] <= o.mu[1] && o.nu[0] > 0.0 && o.nu[0] <= o.nu[1],
            || format!("invalid optimizer bounds mu={:?} nu={:?}", o.mu, o.nu),
        )?;
        let r = &self.run;
        ensure(r.pulses >= 1.0 && r.pulses.is_finite(), || {
            format!("pulse count must be >= 1, got {}", r.pulses)
        })?;
        ensure(r.quadrature_nodes >= 8, || {
            format!("need at least 8 quadrature nodes, got {}", r.quadrature_nodes)
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}
