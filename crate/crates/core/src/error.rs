use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot normalize a vector with norm {norm:e}")]
    ZeroVector { norm: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint is corrupt: {0}")]
    CorruptChecksum(String),

    #[error("no negatives to rank")]
    EmptyNegatives,

    #[error("replacement needs {needed} reserve entries but only {available} are available")]
    ReserveExhausted { needed: usize, available: usize },

    #[error("batch of {batch} exceeds queue capacity {capacity}")]
    BatchTooLarge { batch: usize, capacity: usize },

    #[error("malformed CIFAR-10 record: {0}")]
    MalformedRecord(String),

    #[error("unknown class label {0}")]
    UnknownLabel(i64),

    #[error("linear probe needs at least two classes, found {0}")]
    DegenerateLabels(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("class {label} has {count} instances; at least 2 are required")]
    InsufficientInstances { label: i64, count: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("grid has {points} points, limit is {limit}")]
    GridTooLarge { points: usize, limit: usize },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
