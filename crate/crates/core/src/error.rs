use thiserror::Error;

/// Errors raised by model construction, quadrature and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: non-monotone radii, nonpositive weights, bad config values.
    #[error("validation error: {0}")]
    Validation(String),

    /// A standing hypothesis on the weights failed (summability, positivity, A2 sampling).
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// A density, drift or integrand could not be evaluated at a point.
    #[error("evaluation error at {point:?}: {reason}")]
    Evaluation { point: Vec<f64>, reason: String },

    /// The time step is too coarse for the path (e.g. the radius went nonpositive).
    #[error("step size error: {0}")]
    StepSize(String),

    /// An operation was called with arguments it does not support.
    #[error("usage error: {0}")]
    Usage(String),

    /// A statistical test was configured inconsistently.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn eval(point: &[f64], reason: impl Into<String>) -> Self {
        Error::Evaluation {
            point: point.to_vec(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
