use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PimError>;

#[derive(Debug, Error)]
pub enum PimError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("insufficient points: need more than {needed}, have {have}")]
    InsufficientPoints { needed: usize, have: usize },

    #[error("insufficient spread: {0}")]
    InsufficientSpread(String),

    #[error("point at {0:?} is out of kernel reach of the cloud")]
    OutOfReach(Vec<f64>),

    #[error("isolated point {0}: kernel normalizer vanishes")]
    IsolatedPoint(usize),

    #[error("singular system: kernel graph has {} components (sizes {:?})", .component_sizes.len(), .component_sizes)]
    Singular { component_sizes: Vec<usize> },

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("ALM outer loop did not converge after {} iterations (last boundary residual {:e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    AlmNotConverged { history: Vec<f64> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("spectral anomaly: eigenvalue {re} has imaginary part {im:e}")]
    SpectralAnomaly { re: f64, im: f64 },

    #[error("inner solve failed at outer iteration {outer}: {source}")]
    Outer {
        outer: usize,
        #[source]
        source: Box<PimError>,
    },
}

impl PimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PimError::Io {
            path: path.into(),
            source,
        }
    }
}
