use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not skew-symmetric (||A + A^T||_F = {0:e})")]
    NotSkew(f64),

    #[error("L kernel is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("eigenvalue {value} at index {index} is at unity; L kernel would be infinite")]
    EigenvalueAtUnity { index: usize, value: f64 },

    #[error("k = {k} exceeds the numerical rank {rank} of the kernel")]
    RankTooSmall { k: usize, rank: usize },

    #[error("no subsets of size {0} have positive probability")]
    EmptySupport(usize),

    #[error("K - I_Ybar is singular at example {0}")]
    SingularAtExample(usize),

    #[error("H matrix is degenerate at example {0}")]
    DegenerateExample(usize),

    #[error("eigenvalue {value} at index {index} lies outside the clamp interval")]
    EigenvalueOutsideClamp { index: usize, value: f64 },

    #[error("kernel incompatible with size filter: {accepted} accepted out of {attempts} draws")]
    SizeFilterIncompatible { accepted: usize, attempts: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
