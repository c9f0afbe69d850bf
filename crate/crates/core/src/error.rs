use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sample spacing mismatch: {left} vs {right}")]
    StepMismatch { left: f64, right: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel of {kernel} samples exceeds buffer capacity {capacity}")]
    KernelTooLong { kernel: usize, capacity: usize },

    #[error(
        "not null-controllable at tolerance: smallest Gramian eigenvalue {lambda_min:e} \
         (largest {lambda_max:e})"
    )]
    NotNullControllable { lambda_min: f64, lambda_max: f64 },

    #[error("horizon not yet filled: t = {t}, horizon = {horizon}")]
    HorizonNotFilled { t: f64, horizon: f64 },

    #[error("estimator has no basis")]
    MissingBasis,

    #[error("singular algebraic loop in the feedback realization")]
    SingularLoop,

    #[error("CFL violation: dt = {dt} exceeds dx = {dx}")]
    Cfl { dt: f64, dx: f64 },

    #[error("support violation: {0}")]
    Support(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Failures caused by conditioning or residuals rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotNullControllable { .. } | Error::SingularLoop
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
