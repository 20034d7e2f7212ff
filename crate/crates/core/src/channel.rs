//! Detection statistics of two weak coherent pulses interfering at an
//! untrusted beam splitter with two threshold detectors L and R.
//!
//! For intensities `k_a`, `k_b` arriving with transmittances `η_a`, `η_b`
//! and a phase difference `φ`:
//!
//! ```text
//! y   = exp(-(η_a k_a + η_b k_b)/2) (1 - p_d)
//! ω   = sqrt(η_a k_a η_b k_b)
//! q_L = y (exp( ω cos φ) - y)
//! q_R = y (exp(-ω cos φ) - y)
//! ```
//!
//! and the phase-averaged gain is `q = 2y (I₀(ω) - y)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::special::{bessel_i0_m1, periodic_mean};

/// The four intensity settings of each user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Signal,
    Decoy,
    PreserveVacuum,
    DeclareVacuum,
}

impl Intensity {
    pub const ALL: [Intensity; 4] = [
        Intensity::Signal,
        Intensity::Decoy,
        Intensity::PreserveVacuum,
        Intensity::DeclareVacuum,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_vacuum(self) -> bool {
        matches!(self, Intensity::PreserveVacuum | Intensity::DeclareVacuum)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Intensity::Signal => "mu",
            Intensity::Decoy => "nu",
            Intensity::PreserveVacuum => "o",
            Intensity::DeclareVacuum => "ohat",
        }
    }
}

/// Intensities and their selection probabilities for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub p_o: f64,
    pub p_ohat: f64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.mu.is_finite() && self.nu.is_finite(), || {
            "intensities must be finite".into()
        })?;
        ensure(self.mu > self.nu && self.nu > 0.0, || {
            format!("need mu > nu > 0 (mu={}, nu={})", self.mu, self.nu)
        })?;
        let ps = self.probabilities();
        ensure(ps.iter().all(|p| p.is_finite() && *p >= 0.0), || {
            format!("probabilities must be nonnegative, got {ps:?}")
        })?;
        let sum: f64 = ps.iter().sum();
        ensure((sum - 1.0).abs() < 1e-9, || {
            format!("probabilities must sum to 1, got {sum}")
        })
    }

    pub fn intensity(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.mu,
            Intensity::Decoy => self.nu,
            _ => 0.0,
        }
    }

    pub fn probability(&self, k: Intensity) -> f64 {
        self.probabilities()[k.index()]
    }

    /// `[p_μ, p_ν, p_o, p_ô]`.
    pub fn probabilities(&self) -> [f64; 4] {
        [self.p_mu, self.p_nu, self.p_o, self.p_ohat]
    }

    /// Probability of sending either vacuum state.
    pub fn p_vacuum(&self) -> f64 {
        self.p_o + self.p_ohat
    }
}

/// Fiber links from each user to the measurement node, plus the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Alice's fiber length in km.
    pub l_a: f64,
    /// Bob's fiber length in km.
    pub l_b: f64,
    /// Attenuation in dB/km.
    pub alpha: f64,
    pub eta_d: f64,
    /// Dark-count probability per pulse per detector.
    pub p_d: f64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.l_a >= 0.0 && self.l_b >= 0.0, || {
            format!("fiber lengths must be nonnegative ({}, {})", self.l_a, self.l_b)
        })?;
        ensure(self.alpha.is_finite() && self.alpha >= 0.0, || {
            format!("attenuation must be nonnegative, got {}", self.alpha)
        })?;
        ensure(self.eta_d > 0.0 && self.eta_d <= 1.0, || {
            format!("eta_d must lie in (0, 1], got {}", self.eta_d)
        })?;
        ensure(self.p_d >= 0.0 && self.p_d < 1.0, || {
            format!("p_d must lie in [0, 1), got {}", self.p_d)
        })
    }

    pub fn eta_a(&self) -> f64 {
        self.eta_d * fiber_transmittance(self.alpha, self.l_a)
    }

    pub fn eta_b(&self) -> f64 {
        self.eta_d * fiber_transmittance(self.alpha, self.l_b)
    }

    pub fn total_length(&self) -> f64 {
        self.l_a + self.l_b
    }

    pub fn is_symmetric(&self) -> bool {
        self.l_a == self.l_b
    }
}

/// `10^(-α l / 10)`.
pub fn fiber_transmittance(alpha: f64, l: f64) -> f64 {
    10f64.powf(-alpha * l / 10.0)
}

/// Click model for one intensity pair; phase-independent parts precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickModel {
    /// Probability that a given detector stays silent at zero interference.
    pub y: f64,
    /// `1 - y`, kept separately to avoid cancellation.
    pub one_minus_y: f64,
    pub omega: f64,
}

impl ClickModel {
    pub fn new(k_a: f64, k_b: f64, ch: &ChannelConfig) -> Self {
        Self::from_arrivals(ch.eta_a() * k_a, ch.eta_b() * k_b, ch.p_d)
    }

    /// Model from the mean photon numbers reaching the detectors.
    pub fn from_arrivals(a: f64, b: f64, p_d: f64) -> Self {
        let s = (a + b) / 2.0;
        let e = (-s).exp();
        Self {
            y: e * (1.0 - p_d),
            one_minus_y: -(-s).exp_m1() + e * p_d,
            omega: (a * b).sqrt(),
        }
    }

    pub fn q_l(&self, phi: f64) -> f64 {
        self.y * ((self.omega * phi.cos()).exp_m1() + self.one_minus_y)
    }

    pub fn q_r(&self, phi: f64) -> f64 {
        self.y * ((-self.omega * phi.cos()).exp_m1() + self.one_minus_y)
    }

    pub fn q(&self, phi: f64) -> f64 {
        self.q_l(phi) + self.q_r(phi)
    }

    /// Phase-averaged single-click gain.
    pub fn average(&self) -> f64 {
        2.0 * self.y * (bessel_i0_m1(self.omega) + self.one_minus_y)
    }

    /// Upper bound of `q(φ)` over all phases.
    pub fn max_gain(&self) -> f64 {
        2.0 * self.y * (self.omega.exp_m1() + self.one_minus_y)
    }
}

/// `(q_L, q_R)` at phase difference `phi`.
pub fn single_click_gains(k_a: f64, k_b: f64, phi: f64, ch: &ChannelConfig) -> Result<(f64, f64)> {
    ch.validate()?;
    check_intensities(k_a, k_b)?;
    let m = ClickModel::new(k_a, k_b, ch);
    Ok((m.q_l(phi), m.q_r(phi)))
}

/// Phase-averaged gain `2y(I₀(ω) - y)`.
pub fn average_gain(k_a: f64, k_b: f64, ch: &ChannelConfig) -> Result<f64> {
    ch.validate()?;
    check_intensities(k_a, k_b)?;
    Ok(ClickModel::new(k_a, k_b, ch).average())
}

/// Phase-averaged gain by trapezoid quadrature of `q_L + q_R`.
pub fn average_gain_quadrature(k_a: f64, k_b: f64, ch: &ChannelConfig, nodes: usize) -> Result<f64> {
    ch.validate()?;
    check_intensities(k_a, k_b)?;
    let m = ClickModel::new(k_a, k_b, ch);
    Ok(periodic_mean(nodes, |phi| m.q(phi)))
}

/// Expected number of detections `N p_ka p_kb q`.
pub fn pair_count(n: f64, p_ka: f64, p_kb: f64, q: f64) -> f64 {
    n * p_ka * p_kb * q
}

fn check_intensities(k_a: f64, k_b: f64) -> Result<()> {
    ensure(k_a >= 0.0 && k_b >= 0.0 && k_a.is_finite() && k_b.is_finite(), || {
        format!("intensities must be finite and nonnegative ({k_a}, {k_b})")
    })
}

/// Phase-averaged gains for all sixteen intensity pairs, `[alice][bob]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainTable {
    pub models: [[ClickModel; 4]; 4],
    pub gains: [[f64; 4]; 4],
}

impl GainTable {
    pub fn new(a: &SourceConfig, b: &SourceConfig, ch: &ChannelConfig) -> Self {
        let models = Intensity::ALL.map(|ka| {
            Intensity::ALL.map(|kb| ClickModel::new(a.intensity(ka), b.intensity(kb), ch))
        });
        let gains = models.map(|row| row.map(|m| m.average()));
        Self { models, gains }
    }

    pub fn gain(&self, ka: Intensity, kb: Intensity) -> f64 {
        self.gains[ka.index()][kb.index()]
    }

    pub fn model(&self, ka: Intensity, kb: Intensity) -> &ClickModel {
        &self.models[ka.index()][kb.index()]
    }

    /// Average per-bin detection probability `Σ p_ka p_kb q_kakb`.
    pub fn mean_detection(&self, a: &SourceConfig, b: &SourceConfig) -> f64 {
        let pa = a.probabilities();
        let pb = b.probabilities();
        (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| pa[i] * pb[j] * self.gains[i][j])
            .sum()
    }
}
