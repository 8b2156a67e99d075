use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Logarithm requested for a rotation whose angle is within the
    /// antipodal margin of pi.
    #[error("near-antipodal rotation (angle {angle})")]
    NearAntipodal { angle: f64 },

    #[error("singular schedule at t = {t} (sigma_t = {sigma})")]
    SingularSchedule { t: f64, sigma: f64 },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("degenerate problem: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
