use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input falls outside the domain of a physical formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A target lies beyond the maximum delay the receiver bandwidth supports.
    #[error("target delay {tau_s:.3e} s exceeds the maximum supported delay {tau_max_s:.3e} s")]
    OutOfRange { tau_s: f64, tau_max_s: f64 },

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two operands have incompatible shapes.
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Dimension {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// The Fisher information matrix cannot be inverted.
    #[error("singular Fisher information: {0}")]
    Singular(String),

    /// A velocity look-up table is not one-to-one over the requested span.
    #[error("requested velocity span is not one-to-one; maximal valid span is [{lo_mps:.4}, {hi_mps:.4}] m/s")]
    SpanTooWide { lo_mps: f64, hi_mps: f64 },

    /// The measured phase cannot be attributed to a velocity inside the channel span.
    #[error("ambiguous velocity: {0}")]
    AmbiguousVelocity(String),

    /// No resources are left to honour a request.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The model assumptions behind a formula do not hold for this input.
    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
