use thiserror::Error;

/// Errors raised by the estimation, simulation and evaluation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension {p} is not a multiple of block size {block}")]
    BlockSize { p: usize, block: usize },

    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("no grid point within bandwidth: t = {t}, b = {b}")]
    EmptyKernelSupport { t: f64, b: f64 },

    #[error("window of {w} samples around s = {s} does not fit in n = {n}")]
    WindowOverflow { s: usize, w: usize, n: usize },

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("threshold selection needs at least two positive peaks, got {0}; pass an explicit nu")]
    TooFewPeaks(usize),

    #[error("column {column}: program infeasible at lambda = {lambda}; lambda >= {min_lambda:e} restores feasibility")]
    Infeasible {
        column: usize,
        lambda: f64,
        min_lambda: f64,
    },

    #[error("column {column}: simplex did not converge in {iterations} iterations (max primal infeasibility {residual:e})")]
    NotConverged {
        column: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("{} of {p} columns failed (first: {first})", failed.len())]
    ColumnsFailed {
        p: usize,
        failed: Vec<usize>,
        first: Box<Error>,
    },

    #[error("{0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Failures of the numerical routines themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::IllConditioned { .. }
            | Error::TooFewPeaks(_)
            | Error::Infeasible { .. }
            | Error::NotConverged { .. } => true,
            Error::ColumnsFailed { first, .. } => first.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
