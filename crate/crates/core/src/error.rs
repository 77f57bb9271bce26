use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate sample: all absolute values are equal")]
    DegenerateSample,
    #[error("moment order p={p} must lie in (0, alpha={alpha})")]
    InvalidMomentOrder { p: f64, alpha: f64 },
    #[error("skewed laws are not supported at alpha=1")]
    UnsupportedSkew,
    #[error("alpha={alpha} not allowed: {reason}")]
    InvalidAlpha { alpha: f64, reason: &'static str },
    #[error("kernel has zero scale")]
    ZeroScale,
    #[error("empty composite variogram")]
    EmptyComposite,
    #[error("base model is not isotropic")]
    NotIsotropic,
    #[error("matrix is not positive semi-definite beyond the jitter cap")]
    NotPsd,
    #[error("grid has {sites} sites, above the dense-solver cap of {cap}")]
    GridTooLarge { sites: usize, cap: usize },
    #[error("singular linear system (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("kernels at the prediction sites are linearly dependent")]
    SingularProblem,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("covariation vector is identically zero")]
    ZeroCovariationVector,
    #[error("duplicate observation site at index {0}")]
    DuplicateSite(usize),
    #[error("operation not available for this problem: {0}")]
    Unsupported(&'static str),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
