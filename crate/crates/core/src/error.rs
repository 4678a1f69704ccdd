use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("point lies outside the constraint set")]
    OutsideSet,

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigendecomposition failed")]
    EigenFailure,

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error(
        "Armijo search exhausted {backtracks} backtracks (delta {delta:e}, f(x) {f_x:e}, last trial {f_trial:e})"
    )]
    LineSearchExhausted {
        backtracks: usize,
        delta: f64,
        f_x: f64,
        f_trial: f64,
    },

    #[error("proximal weight underflow: tau = {tau:e}")]
    TauUnderflow { tau: f64 },

    #[error("dimension too large for brute force: {0}")]
    TooLarge(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
