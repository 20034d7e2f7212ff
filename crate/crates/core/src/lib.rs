//! Asynchronous MDI-QKD: finite-key rate calculation, parameter search and
//! a pulse-level Monte Carlo cross-check.

pub mod channel;
pub mod decoy;
pub mod drift;
pub mod error;
pub mod keyrate;
pub mod matching;
pub mod montecarlo;
pub mod optimizer;
pub mod scenario;
pub mod special;
pub mod stats;

pub use channel::{ChannelConfig, ClickModel, GainTable, Intensity, SourceConfig};
pub use decoy::{DecoyBounds, ObservedCounts};
pub use drift::{DriftConfig, PhaseMode};
pub use error::{Error, Result};
pub use keyrate::{evaluate, KeyRateResult, SecurityConfig};
pub use matching::{MatchingConfig, MatchingMode, XSlices, ZBasisCounts, ZMatchCounts};
pub use montecarlo::{predict, simulate, validate, Prediction, SimRun, Tallies, ValidationReport};
pub use optimizer::{optimize, OptimizeResult, SearchSpace};
pub use scenario::{OptimizerConfig, RunConfig, Scenario, DEFAULT_SEED, DEFAULT_SOURCE};
pub use stats::{Bounds, FailureProb};
