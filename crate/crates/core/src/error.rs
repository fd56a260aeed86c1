use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no tick at or before grid start {start} (supply warmup or truncate)")]
    NoPriorTick { start: f64 },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mismatched lengths: {0}")]
    LengthMismatch(String),

    #[error("spectrum is not Hermitian: imaginary residue {residue:e} exceeds {limit:e}")]
    NotHermitian { residue: f64, limit: f64 },

    #[error("fit did not converge after {iterations} iterations (chi2 = {chi2})")]
    NoConvergence { iterations: usize, chi2: f64, best: Box<crate::fitting::FitResult> },

    #[error("{count} malformed record(s); first at line {line}: {message}")]
    Records { count: usize, line: usize, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for data problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateVariance(_) | Error::NotHermitian { .. } | Error::NoConvergence { .. } => 3,
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            _ => 2,
        }
    }
}
