use thiserror::Error;

use crate::heig::EigenResult;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every start of the eigen search failed the KKT residual test. The best
    /// candidate seen is kept so callers can still report it.
    #[error("eigen solver failed to converge (best lambda {:.6e}, residual {:.3e})", best.lambda, best.residual)]
    SolverFailure { best: Box<EigenResult> },

    /// The SOS decision could not be made because the SDP did not reach an
    /// optimal status. Never coerced into a negative verdict.
    #[error("SOS membership undecided: {0}")]
    SosUndecided(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
