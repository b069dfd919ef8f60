use thiserror::Error;

use crate::filter::Diagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or model parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A matrix that has to be invertible is (numerically) singular.
    #[error("singular matrix: eigenvalue {eigenvalue:e} ({context})")]
    Singular { eigenvalue: f64, context: String },

    #[error("eigen-solver did not converge after {matvecs} products (residual {residual:e})")]
    NonConvergence { matvecs: usize, residual: f64 },

    /// A filter step found a large spectral certificate but no admissible
    /// threshold. This means the clean samples are not representative enough
    /// (too few of them, or the corruption rate exceeds the configured one).
    #[error("violated sampling assumption in {step}: {}", .diagnostics.summary())]
    ViolatedAssumption {
        step: &'static str,
        diagnostics: Box<Diagnostics>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The input is degenerate in a way no estimator can recover from.
    #[error("pathological input: {0}")]
    Pathological(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn is_violated_assumption(&self) -> bool {
        matches!(self, Error::ViolatedAssumption { .. })
    }
}
