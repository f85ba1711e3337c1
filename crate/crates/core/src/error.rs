use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Prediction sets do not line up (different samples, ragged draws, shape mismatch).
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("kernel `{kernel}` cannot score {domain} predictions")]
    Domain { kernel: String, domain: String },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Weight calibration ran out of iterations; carries the last weights.
    #[error("calibration did not converge within {iterations} iterations")]
    IterationLimit { iterations: usize, last_alpha: Vec<f64> },

    #[error("index {index} out of range for roster of {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("reference set is empty")]
    EmptyReferenceSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol: {0}")]
    Protocol(String),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Structural(_) => "structural",
            Error::Domain { .. } => "domain",
            Error::DegenerateVariance(_) => "degenerate_variance",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::IterationLimit { .. } => "iteration_limit",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::EmptyReferenceSet => "empty_reference_set",
            Error::Config(_) => "config",
            Error::Protocol(_) => "protocol",
        }
    }
}
