use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:.3e} (allowed {tolerance:.3e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("matrix is not unitary: ||U^H U - I||_F = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("eigendecomposition did not converge")]
    NoConvergence,

    #[error("matrix is rank deficient (|R[{index},{index}]| = {magnitude:.3e})")]
    RankDeficient { index: usize, magnitude: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("zero-norm reference matrix")]
    ZeroNorm,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate fault at layer {layer}, port {port}")]
    DuplicateFault { layer: usize, port: usize },

    #[error("fault position (layer {layer}, port {port}) out of range for {layers}x{ports} program")]
    FaultOutOfRange {
        layer: usize,
        port: usize,
        layers: usize,
        ports: usize,
    },
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
