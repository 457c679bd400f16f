use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("zero-forcing is infeasible: {0}")]
    ZfInfeasible(String),

    /// Zero-forcing cannot exist for this channel geometry at any power:
    /// more MTs than antennas, or linearly dependent channels.
    #[error("zero-forcing is structurally infeasible: {0}")]
    ZfStructurallyInfeasible(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },

    /// The uplink power iteration ran out of budget. `last` is the final
    /// iterate and `growth` the largest ratio between it and the first
    /// iterate; unbounded growth means the SINR targets are not attainable.
    #[error("uplink fixed point did not converge after {iterations} iterations (growth {growth:.3e})")]
    FixedPointDiverged {
        iterations: usize,
        growth: f64,
        last: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for verdicts that mean "no solution exists", as opposed to
    /// budget exhaustion or bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Infeasible(_) | Error::ZfInfeasible(_) | Error::ZfStructurallyInfeasible(_)
        )
    }
}
