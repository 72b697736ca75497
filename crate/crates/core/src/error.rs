use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension {0} is not supported (expected 1, 2 or 3)")]
    InvalidDimension(usize),
    #[error("resolution {0} is invalid (expected a power of two, at least 4)")]
    InvalidResolution(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("ellipticity violated: lower bound {lambda:.3e} at dual point {index}")]
    EllipticityViolation { lambda: f64, index: usize },
    #[error("complex time argument {arg:.4} outside sector of half-angle {limit:.4}")]
    SectorViolation { arg: f64, limit: f64 },
    #[error("krylov iteration stagnated: {0}")]
    KrylovStagnation(String),
    #[error("spectral factorization rejected: {0}")]
    SpectralFailure(String),
    #[error("degenerate probe sets: {0}")]
    DegenerateSets(String),
    #[error("contour angles incompatible: {0}")]
    AngleIncompatible(String),
    #[error("contour quadrature diverged: {0}")]
    QuadratureDivergence(String),
    #[error("input has a nonzero mean (relative size {0:.3e})")]
    NullComponent(f64),
    #[error("operator is not a scalar multiple of the identity")]
    NonScalarOperator,
    #[error("space-time field has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("annulus index {ring} exceeds the largest admissible ring {max}")]
    RingOutOfRange { ring: usize, max: usize },
    #[error("exponent p = {0} is not supported here (need 0 < p <= 1)")]
    UnsupportedExponent(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("residual does not decrease: {0}")]
    ResidualFloor(String),
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("constants ledger not found at {0}")]
    LedgerMissing(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
