use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QtError {
    #[error("N must be odd and at least 3, got {0}")]
    InvalidN(usize),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("input is zero (modulus below threshold)")]
    ZeroInput,
    #[error("no cocycle integer matches for z={z}, w={w}")]
    NoMatch { z: String, w: String },
    #[error("singular weight: {0}")]
    SingularWeight(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad factor positions: {0}")]
    BadPositions(String),
    #[error("reference operator is zero")]
    ZeroReference,
    #[error("system too large for dense commutant computation (side {0})")]
    TooLarge(usize),
    #[error("operator is not N-torsion (relative residual {0:e})")]
    NotTorsion(f64),
    #[error("operators do not satisfy CD = q^2 DC (relative residual {0:e})")]
    BadCommutation(f64),
    #[error("invalid dilogarithm parameters: {0}")]
    InvalidParams(String),
    #[error("regularity violation: {0}")]
    RegularityViolation(String),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("operator does not factor through the kept factors (relative residual {0:e})")]
    FactorizationFailure(f64),
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("invalid combinatorics: {0}")]
    InvalidCombinatorics(String),
    #[error("unknown triangle {0}")]
    UnknownTriangle(usize),
    #[error("triangles {0} and {1} are not adjacent in the required way")]
    NotAdjacent(usize, usize),
    #[error("dot configuration does not allow this move: {0}")]
    BadDotConfiguration(String),
    #[error("edge labels would become inconsistent: {0}")]
    InconsistentLabels(String),
    #[error("object is not sane: {0}")]
    NotSane(String),
    #[error("move sequence does not close into a loop")]
    NotALoop,
    #[error("unknown relation kind: {0}")]
    UnknownKind(String),
}

pub type Result<T> = std::result::Result<T, QtError>;
