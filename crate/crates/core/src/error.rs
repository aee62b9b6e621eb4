use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("points per side must be a power of two >= 8, got {0}")]
    NonPowerOfTwo(usize),
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("torus extent must be positive and finite, got {0}")]
    BadExtent(f64),
    #[error("fields live on different lattices")]
    LatticeMismatch,
    #[error("expected a {expected}d lattice, got {got}d")]
    WrongDimension { expected: usize, got: usize },
    #[error("shift component {0} is not a whole number of lattice cells")]
    NonLatticeShift(f64),
    #[error("mollifier scale {eps} is below the resolvability floor {floor}")]
    UnresolvedMollifier { eps: f64, floor: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel support needs L > 4, got L = {0}")]
    TorusTooSmall(f64),
    #[error("inconsistent mollifier scales: {0} vs {1}")]
    EpsilonMismatch(f64, f64),
    #[error("fixed-point map is not a contraction (factor {0:.4})")]
    NoContraction(f64),
    #[error("fewer than three dyadic scales fit between 2h and 1")]
    TooFewScales,
    #[error("monte-carlo budget exhausted: stderr {got:.3e} above target {target:.3e}")]
    BudgetExhausted { got: f64, target: f64 },
    #[error("time stepper blew up: growth {growth:.3e} exceeds bound {bound:.3e}")]
    StabilityViolation { growth: f64, bound: f64 },
    #[error("dense matrix requested for {0} unknowns (limit 4096)")]
    DenseTooLarge(usize),
    #[error("ball of radius {radius} does not fit in the fundamental domain of side {extent}")]
    BallTooLarge { radius: f64, extent: f64 },
    #[error("at least {need} samples required, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("malformed field blob: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
