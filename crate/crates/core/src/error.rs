use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain specification: {0}")]
    InvalidSpec(String),

    #[error("realization index must be non-negative, got {0}")]
    NegativeIndex(i64),

    #[error("unsupported disorder distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("{solver} solver does not support {what}")]
    Unsupported { solver: &'static str, what: String },

    #[error("site pair ({i}, {j}) out of range for a chain of {n} sites")]
    PairOutOfRange { i: usize, j: usize, n: usize },

    #[error("sites ({i}, {j}) are closer than {margin} sites to the chain boundary")]
    MarginViolation { i: usize, j: usize, margin: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-physical density matrix: {0}")]
    NonPhysical(String),

    #[error("eigen/singular decomposition did not converge: {0}")]
    Decomposition(String),

    #[error("DMRG did not converge: last sweep energies {prev:.12} and {last:.12}")]
    DmrgNotConverged { prev: f64, last: f64 },

    #[error("DMRG truncation error {0:.3e} exceeds threshold")]
    TruncationExceeded(f64),

    #[error("system of {0} sites is too large for exact diagonalization")]
    TooLarge(usize),

    #[error("closed-form discord requested outside its validity regime: {0}")]
    ClosedFormInvalid(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("realization {index} failed: {source}")]
    Realization {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
