use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("length mismatch: expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("cannot normalize a function with zero norm")]
    ZeroNorm,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not symmetric on this state: imaginary part {imag:e} exceeds {bound:e}")]
    NonSymmetricOperator { imag: f64, bound: f64 },

    #[error("inconsistent channel output: current {current:e} at x = {x} where density is below the floor")]
    InconsistentChannelOutput { x: f64, current: f64 },

    #[error("domain too small: state {state} has boundary amplitude {amplitude:e} relative to its peak")]
    DomainTooSmall { state: usize, amplitude: f64 },

    #[error("spectral basis too small: captured probability {captured} < {required}")]
    KMaxTooSmall { captured: f64, required: f64 },

    #[error("{0} did not converge")]
    NotConverged(&'static str),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI error payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid-grid",
            Error::GridMismatch => "grid-mismatch",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::ZeroNorm => "zero-norm",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonSymmetricOperator { .. } => "non-symmetric-operator",
            Error::InconsistentChannelOutput { .. } => "inconsistent-channel-output",
            Error::DomainTooSmall { .. } => "domain-too-small",
            Error::KMaxTooSmall { .. } => "k-max-too-small",
            Error::NotConverged(_) => "not-converged",
            Error::Format(_) => "malformed-input",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
