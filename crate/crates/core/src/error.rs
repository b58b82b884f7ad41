use std::path::PathBuf;

/// Errors raised by the library. The CLI maps these onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer} ({kind}): {detail}")]
    Shape {
        layer: usize,
        kind: &'static str,
        detail: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown architecture id `{0}`")]
    UnknownArch(String),

    #[error("architecture {arch} is incompatible with input shape {input_shape:?}: {reason}")]
    IncompatibleArch {
        arch: String,
        input_shape: Vec<usize>,
        reason: String,
    },

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: Vec<u8>,
        found: Vec<u8>,
    },

    #[error("truncated {what}: needed {needed} more bytes at offset {offset}")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
    },

    #[error("descriptor mismatch in {what}: {detail}")]
    DescriptorMismatch { what: &'static str, detail: String },

    #[error("record count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("oracle query {query} failed: {reason}")]
    Oracle { query: u64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
