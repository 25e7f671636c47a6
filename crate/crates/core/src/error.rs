use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    /// The state became non-finite (or exceeded the blow-up threshold) at `time`.
    #[error("integration diverged at t = {time}")]
    IntegrationDiverged { time: f64 },

    #[error("shooting failed: {0}")]
    ShootingFailed(String),

    #[error("minimizer diverged: {0}")]
    Diverged(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
