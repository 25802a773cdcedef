use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    /// Input that carries no usable signal, e.g. a constant attention map.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scorer failed: {0}")]
    Scorer(String),

    #[error("trainer failed at version {version}, epoch {epoch}: {message}")]
    Trainer {
        version: usize,
        epoch: usize,
        message: String,
    },

    #[error("predictor failed on frame {frame}: {message}")]
    Predictor { frame: String, message: String },

    #[error("no pseudo-annotations passed selection at version {version}; lower the scorer thresholds")]
    EmptySelection { version: usize },

    #[error("tensor file has bad magic {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported tensor format version {0}")]
    UnsupportedVersion(u8),

    #[error("tensor rank {0} outside [1, 4]")]
    RankOutOfRange(usize),

    #[error("truncated tensor file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("tensor file has {found} bytes, {expected} expected; trailing data")]
    TrailingData { expected: usize, found: usize },

    #[error("mask {path}: pixel ({x}, {y}) has value {value}; only 0 and 255 are allowed")]
    MaskValue {
        path: PathBuf,
        x: u32,
        y: u32,
        value: u8,
    },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }

    /// True for failures raised by an external scorer, trainer or predictor.
    pub fn is_contract_failure(&self) -> bool {
        match self {
            Error::Scorer(_)
            | Error::Trainer { .. }
            | Error::Predictor { .. }
            | Error::Protocol(_)
            | Error::EmptySelection { .. } => true,
            Error::Frame { source, .. } => source.is_contract_failure(),
            _ => false,
        }
    }
}
