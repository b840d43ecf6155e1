use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at offset {offset}")]
    NonFinite { offset: usize },

    #[error("reference t-product refused: n * max dim = {size} exceeds {limit}")]
    TooLargeForReference { size: usize, limit: usize },

    #[error("spectral integrity violated: {0}")]
    Integrity(String),

    #[error("SVD failed to converge on frequency slice {slice}")]
    Decomposition { slice: usize },

    #[error("truncation {k} outside 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("basis is not orthonormal: residual {residual:e} exceeds {tol:e}")]
    NotOrthonormal { residual: f64, tol: f64 },

    #[error("undefined similarity: feature vector {index} is all zero")]
    ZeroFeature { index: usize },

    #[error("range {start}..{end} out of bounds for {len} items")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("malformed container: {0}")]
    Container(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while decoding IDX image/label files.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated at byte offset {offset}: need {needed} bytes, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{extra} trailing bytes after payload")]
    TrailingData { extra: usize },

    #[error("label {value} at index {index} exceeds 9")]
    InvalidLabel { index: usize, value: u8 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("gzip stream: {0}")]
    Gzip(String),
}
