use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("{0}: payload checksum mismatch")]
    ChecksumMismatch(PathBuf),
    #[error("{path}: non-finite value at voxel (d={}, y={}, x={}, z={})", voxel[0], voxel[1], voxel[2], voxel[3])]
    NonFiniteValues { path: PathBuf, voxel: [usize; 4] },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("model format {found_major}.{found_minor} is not supported (this build reads {supported}.x)")]
    VersionMismatch {
        found_major: u8,
        found_minor: u8,
        supported: u8,
    },
    #[error("duplicate subject id {0:?}")]
    DuplicateSubject(String),
    #[error("subject {subject:?} has label {label}, outside the {classes}-class table")]
    UnknownLabel {
        subject: String,
        label: usize,
        classes: usize,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sslhop_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::BadHeader(_) => "bad_header",
            Error::ChecksumMismatch(_) => "checksum_mismatch",
            Error::NonFiniteValues { .. } => "non_finite_values",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::CorruptFile(_) => "corrupt_file",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::DuplicateSubject(_) => "duplicate_subject",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::MissingFile(_) => "missing_file",
            Error::Config(_) => "config",
            Error::Core(e) if e.is_invariant_violation() => "invariant_violation",
            Error::Core(_) => "data",
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Core(e) if e.is_invariant_violation() => 4,
            _ => 3,
        }
    }
}
