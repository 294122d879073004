use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid lattice: length {0} (need at least 3 sites)")]
    InvalidLattice(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("laplacian inversion: components sum to {0}, not zero")]
    SumNonzero(i64),

    #[error("laplacian inversion: first moment {moment} is not divisible by {len}")]
    Divisibility { moment: i64, len: usize },

    #[error("sliding detected: site {site} exceeded the cusp after already jumping ({jumps} jumps)")]
    SlidingDetected { site: usize, jumps: usize },

    #[error("iteration cap of {0} reached without converging")]
    IterationCap(usize),

    #[error("avalanche at site {site} has no extent within one period")]
    NoExtent { site: usize },

    #[error("configuration is already at positive threshold")]
    AtThreshold,

    #[error("trapezoid violated: {0}")]
    TrapezoidViolation(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("exhaustive search infeasible at L = {len} (cap {cap})")]
    Infeasible { len: usize, cap: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("unknown strategy '{name}' (available: {available})")]
    UnknownStrategy { name: String, available: String },
}

pub type Result<T> = std::result::Result<T, Error>;
