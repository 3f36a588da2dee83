use thiserror::Error;

/// Errors raised by the density pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("function is identically zero (no positive mass)")]
    AllZero,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("negative or zero value at index {0}")]
    NonPositive(usize),
    #[error("grids do not match")]
    GridMismatch,
    #[error("supports differ: [{0}, {1}] vs [{2}, {3}]")]
    SupportMismatch(f64, f64, f64, f64),
    #[error("cdf is not invertible: flat span wider than one grid cell near index {0}")]
    NotInvertible(usize),
    #[error("bandwidth {0} outside (0, 0.5) after mapping to the unit interval")]
    BadBandwidth(f64),
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("sample value {0} lies outside the support [{1}, {2}]")]
    OutOfSupport(f64, f64, f64),
    #[error("exponent overflow: {0}")]
    Overflow(String),
    #[error("empty sample")]
    EmptySample,
    #[error("covariance surface is not symmetric")]
    NotSymmetric,
    #[error("requested {requested} components, only {available} available")]
    KTooLarge { requested: usize, available: usize },
    #[error("iteration did not converge after {0} steps")]
    NoConvergence(usize),
    #[error("degenerate scale parameter {0}")]
    DegenerateSigma(f64),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("density has invalid mass {0}")]
    BadMass(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, DensError>;

impl DensError {
    /// Stable name of the variant, for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            DensError::InvalidGrid(_) => "InvalidGrid",
            DensError::AllZero => "AllZero",
            DensError::NonFinite(_) => "NonFinite",
            DensError::NonPositive(_) => "NonPositive",
            DensError::GridMismatch => "GridMismatch",
            DensError::SupportMismatch(..) => "SupportMismatch",
            DensError::NotInvertible(_) => "NotInvertible",
            DensError::BadBandwidth(_) => "BadBandwidth",
            DensError::TooFewSamples { .. } => "TooFewSamples",
            DensError::OutOfSupport(..) => "OutOfSupport",
            DensError::Overflow(_) => "Overflow",
            DensError::EmptySample => "EmptySample",
            DensError::NotSymmetric => "NotSymmetric",
            DensError::KTooLarge { .. } => "KTooLarge",
            DensError::NoConvergence(_) => "NoConvergence",
            DensError::DegenerateSigma(_) => "DegenerateSigma",
            DensError::RankDeficient => "RankDeficient",
            DensError::BadMass(_) => "BadMass",
            DensError::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
