use thiserror::Error;

/// Errors produced while loading, truncating, solving or simulating models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model file: {0}")]
    Parse(String),

    #[error("row ({action}, {state}) sums to {sum} (deviation {deviation:e} exceeds 1e-12)")]
    RowSum {
        action: String,
        state: String,
        sum: f64,
        deviation: f64,
    },

    #[error("row ({action}, {state}) has invalid entry {value} at column {target}")]
    BadProbability {
        action: String,
        state: String,
        target: String,
        value: f64,
    },

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("invalid truncation scheme: {0}")]
    Scheme(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "no convergence after {iterations} iterations: bracket [{cw_lower}, {cw_upper}] has width {:e}",
        cw_upper - cw_lower
    )]
    NonConvergence {
        iterations: usize,
        cw_lower: f64,
        cw_upper: f64,
    },

    #[error("eigenvector collapsed to zero at state {state} after {iterations} iterations (accessibility fails)")]
    Collapse { state: String, iterations: usize },

    #[error("ball {n}: {source}")]
    AtBall {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bellman residual {residual:e} exceeds threshold {threshold:e}")]
    ResidualTooLarge { residual: f64, threshold: f64 },

    #[error("diagnostic undefined: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    /// True for errors caused by a model that violates its structural invariants.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse(_)
            | Error::RowSum { .. }
            | Error::BadProbability { .. }
            | Error::Validation(_)
            | Error::Scheme(_) => true,
            Error::AtBall { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// True for solver failures (non-convergence, collapse).
    pub fn is_solver(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::Collapse { .. }
            | Error::ResidualTooLarge { .. } => true,
            Error::AtBall { source, .. } => source.is_solver(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
