use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("voxel index {index:?} out of range for dims {dims:?}")]
    IndexOutOfRange { index: [usize; 3], dims: [usize; 3] },

    #[error("grid specs do not match")]
    SpecMismatch,

    #[error("label {label} at linear index {index} is not below num_classes {num_classes}")]
    InvalidLabel { label: u8, index: usize, num_classes: u8 },

    #[error("bad magic {found:?}, expected \"OCCV\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported container version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed container header: {0}")]
    Header(String),

    #[error("dtype {dtype:?} is not valid for kind {kind:?}")]
    DtypeMismatch { kind: String, dtype: String },

    #[error("header dims mismatch: {0}")]
    DimsMismatch(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{extra} trailing bytes after payload")]
    TrailingData { extra: usize },

    #[error("non-finite value in float payload at element {index}")]
    NonFinite { index: usize },

    #[error("mask byte {value} at element {index} is neither 0 nor 1")]
    InvalidMaskByte { value: u8, index: usize },

    #[error("expected a {expected} container, found {found}")]
    KindMismatch { expected: &'static str, found: &'static str },

    #[error("ray direction is not unit length (norm {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("trajectory has no poses")]
    EmptyTrajectory,

    #[error("no rays to evaluate")]
    EmptyEvaluation,

    #[error("no voxels carry a valid target")]
    NoValidVoxels,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
