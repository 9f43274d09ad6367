use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("bad IDX magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("target is constant ({0}); cannot normalize")]
    ConstantTarget(f64),

    #[error("too few observations: have {have}, need at least {need}")]
    TooFewObservations { have: usize, need: usize },

    #[error("{kernel} kernel supports only {supported}-dimensional inputs, got {got}")]
    UnsupportedDimension { kernel: &'static str, supported: usize, got: usize },

    #[error("{kernel} kernel does not support derivative order {order}")]
    UnsupportedOrder { kernel: &'static str, order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("model format version {found} is newer than supported version {supported}")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch { expected: expected.to_string(), found: found.to_string() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
