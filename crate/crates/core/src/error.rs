use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("particle count must be even and positive, got {0}")]
    OddParticleCount(usize),
    #[error("box length must be positive and finite, got {0}")]
    InvalidBoxLength(f64),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("system is not charge neutral: total charge {0:e}")]
    NotNeutral(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("coordinate {value} of particle {index} lies outside [0, {box_length})")]
    OutOfBox {
        index: usize,
        value: f64,
        box_length: f64,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("argument {arg:e} outside the domain of {function}")]
    Domain { function: &'static str, arg: f64 },
    #[error("grid size mismatch: expected {expected}, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("runtime model is not calibrated")]
    Uncalibrated,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("timing unstable: relative spread {spread:.2} exceeds {limit:.2} for {kernel}")]
    TimingUnstable {
        kernel: String,
        spread: f64,
        limit: f64,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
