use thiserror::Error;

/// Failures raised by the numerical and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("infeasible distortion D = {distortion}: requires 0 < D < sigma^2 = {sigma2}")]
    InfeasibleDistortion { distortion: f64, sigma2: f64 },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient data: need at least {needed} training samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("ill-conditioned design: condition number {condition:e} is not below {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("matrix `{0}` is not symmetric")]
    NotSymmetric(&'static str),

    #[error("matrix `{0}` is not positive semidefinite")]
    NotPositiveSemidefinite(&'static str),

    /// Every problem found in a configuration, each prefixed by its field path.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Stable upper-case tag for machine-readable reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "CONFIG_ERROR",
            Error::Io(_) => "IO_ERROR",
            Error::InvalidInput(_) | Error::InfeasibleDistortion { .. } | Error::UnsupportedModel(_) => {
                "INVALID_INPUT"
            }
            _ => "NUMERICAL_FAILURE",
        }
    }

    /// True for failures caused by the request rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Io(_)
                | Error::InvalidInput(_)
                | Error::InfeasibleDistortion { .. }
                | Error::UnsupportedModel(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
