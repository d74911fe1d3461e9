use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("site {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("invalid site list: {0}")]
    InvalidSites(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("trace is {trace:.12}, expected 1")]
    BadTrace { trace: f64 },

    #[error("inconsistent bond list: {0}")]
    InvalidBond(String),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("rank-deficient tomography input (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
