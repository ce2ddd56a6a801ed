use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },
    #[error("decomposition failed: {0}")]
    DecompositionFailure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid grouping: N = {n} is not divisible by G = {g}")]
    InvalidGrouping { n: usize, g: usize },
    #[error("invalid stem count {q}: must be below {limit}")]
    InvalidStemCount { q: usize, limit: usize },
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("susceptance entry ({row}, {col}) is non-zero outside the architecture mask")]
    MaskViolation { row: usize, col: usize },
    #[error("matrix is numerically singular: {0}")]
    SingularMatrix(String),
    #[error("scattering matrix has an eigenvalue at -1; no finite susceptance exists")]
    SingularAtMinusOne,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed matrix file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
