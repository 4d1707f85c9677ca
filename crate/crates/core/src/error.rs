use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("collocation points must satisfy 0 <= θ0 < θ1 < ... < θm <= 1 (got {0:?})")]
    InvalidPoints(Vec<f64>),

    #[error("{0}")]
    NotApplicable(String),

    #[error("evaluation time t={t} is outside the represented mesh (0, {t_end}]")]
    OutsideMesh { t: f64, t_end: f64 },

    #[error("singular linear system ({context}); condition estimate {cond:e}")]
    Singular { context: String, cond: f64 },

    #[error("eigenvalue iteration failed to converge for a {dim}x{dim} matrix")]
    EigenNoConvergence { dim: usize },

    #[error("eigensolver failed at alpha={alpha}: {source}")]
    SweepFailure { alpha: f64, source: Box<Error> },

    #[error("generalised Vandermonde determinant {value:e} is not positive for strictly increasing data")]
    PositivityViolation { value: f64 },

    #[error("barrier verification failed at x={x}: {reason}")]
    BarrierCheck { x: f64, reason: String },

    #[error("step rejected {rejections} times at t={t} (last tau={tau:e}, residual/barrier={ratio:e})")]
    TooManyRejections { t: f64, tau: f64, rejections: usize, ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
