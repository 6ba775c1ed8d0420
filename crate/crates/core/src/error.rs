use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parameter outside its domain: {0}")]
    ParameterDomain(String),

    #[error("argument outside its domain: {0}")]
    Domain(String),

    #[error("cumulative table did not reach unity within {cap} entries")]
    HeavyTail { cap: usize },

    #[error("marginal distribution is degenerate (zero variance)")]
    Degenerate,

    #[error("correlation {rho} is outside the achievable range ({lower}, {upper}); violated the {bound} bound")]
    Range {
        rho: f64,
        lower: f64,
        upper: f64,
        bound: Bound,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("autoregressive polynomial is not causal")]
    NonCausal,

    #[error("moving-average polynomial is not invertible")]
    NonInvertible,

    #[error("singular Toeplitz system at step {0}")]
    NumericalRank(usize),

    #[error("covariance is not positive definite (prediction variance non-positive at step {0})")]
    Definiteness(usize),

    #[error("truncation interval ({a}, {b}) carries no normal probability")]
    ImpossibleRegion { a: f64, b: f64 },

    #[error("observation at t={0} has zero probability under the model")]
    ImpossibleData(usize),

    #[error("series has zero sample variance")]
    ZeroVariance,

    #[error("optimizer failed: {0}")]
    Optimizer(String),
}

/// Which end of an admissible interval was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Lower => write!(f, "lower"),
            Bound::Upper => write!(f, "upper"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse classification used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::ParameterDomain(_) | Error::Domain(_) => ErrorKind::Config,
            Error::ImpossibleData(_) | Error::ZeroVariance => ErrorKind::Data,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
