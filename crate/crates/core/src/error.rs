use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input violates a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A function was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A computation produced a non-finite or otherwise unusable value.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Scenario configuration could not be parsed or validated.
    #[error("configuration error: {0}")]
    Config(String),
    /// Two inputs that must describe the same run disagree.
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}

pub(crate) fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numeric(format!("{name} is not finite ({x})")))
    }
}
