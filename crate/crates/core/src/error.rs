use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported Hermite order {order} (maximum {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("degenerate activation `{0}`: zero variance under the Gaussian")]
    DegenerateActivation(String),

    #[error("linear activation not allowed here: {0}")]
    LinearActivation(&'static str),

    #[error("b_sigma = 0: {0}")]
    ZeroBSigma(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("resource budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("eigensolver failed on {rows}x{cols} matrix (max |entry| {max_abs:e})")]
    Eigen { rows: usize, cols: usize, max_abs: f64 },

    #[error("ill-conditioned linear system: {0}")]
    Conditioning(String),

    #[error("fixed-point solver did not converge at z = {re}+{im}i after {iterations} iterations (residual {residual:e})")]
    NotConverged { re: f64, im: f64, iterations: usize, residual: f64 },

    #[error("cdf is not monotone near x = {at} (drop of {drop:e})")]
    NonMonotoneCdf { at: f64, drop: f64 },

    #[error("density grid does not cover the support (mass {mass})")]
    GridCoverage { mass: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
