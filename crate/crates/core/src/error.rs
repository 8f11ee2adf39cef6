use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{threshold:e}")]
    NotPsd { eigenvalue: f64, threshold: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("spectrum is not sorted in nonincreasing order at index {0}")]
    SpectrumNotSorted(usize),

    #[error("spectrum has a negative entry at index {0}")]
    NegativeEntry(usize),

    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("evaluator mode {mode} does not support this operation")]
    ModeMismatch { mode: &'static str },

    #[error("linear system is singular at working precision ({0})")]
    SingularSystem(&'static str),

    #[error("t = {t} exceeds the overflow guard t_max = {t_max}")]
    OverflowGuard { t: f64, t_max: f64 },

    #[error("integrator exceeded {0} steps")]
    StepLimitExceeded(usize),

    #[error("epsilon {epsilon} exceeds its bound {bound}")]
    EpsilonTooLarge { epsilon: f64, bound: f64 },

    #[error("initial mode weight is zero for mode {0}")]
    ZeroModeWeight(usize),

    #[error("initialization is rank deficient; the general regime needs an invertible rotated initial product")]
    RankDeficientInit,

    #[error("initialization scale is not admissible: {0}")]
    NotAdmissible(String),

    #[error("level {level} is unreachable: initial value already at or above level * sigma")]
    LevelUnreachable { level: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("no admissible alpha in the sweep")]
    NoAdmissibleAlpha,

    #[error("malformed matrix file {path}: {reason}")]
    MatrixFormat { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
