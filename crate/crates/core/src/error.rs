use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} outside tabulated range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("source is not connected to the sink set")]
    Unreachable,
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("gauge validation failed: {check} violated at x = {x:e}")]
    Validation { check: &'static str, x: f64 },
    #[error("flow decomposition left residual {residual:e} above tolerance")]
    Decomposition { residual: f64 },
    #[error("energy comparison violated: {0}")]
    EnergyComparison(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("malformed dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Process exit code for this error class, used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Range { .. } => 3,
            Error::Argument(_) => 4,
            Error::Unreachable | Error::Solver { .. } => 5,
            Error::InsufficientData(_) => 6,
            Error::Validation { .. } | Error::EnergyComparison(_) => 7,
            Error::Decomposition { .. } => 8,
            Error::Format(_) => 9,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 10,
        }
    }
}
