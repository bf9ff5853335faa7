use std::path::PathBuf;

/// Errors raised by the kernels, the detectors and the sweep harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is rank deficient: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    RankDeficient { pivot: f64, threshold: f64 },

    #[error("singular matrix in {0}")]
    SingularMatrix(&'static str),

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("correlation coefficient {0} outside [0, 1)")]
    InvalidCorrelation(f64),

    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("numeric check failed: {0}")]
    Numeric(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("cannot parse scenario at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad input files rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Parse { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
