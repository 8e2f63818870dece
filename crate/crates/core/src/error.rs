use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("window {window:?} at origin {origin:?} exceeds source dims {dims:?}")]
    OutOfBounds {
        origin: [usize; 3],
        window: [usize; 3],
        dims: [usize; 3],
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("window {window:?} larger than map {dims:?}")]
    WindowTooLarge { window: [usize; 3], dims: [usize; 3] },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("only one class present in the labels")]
    SingleClass,
    #[error("channel index {index} out of range for {channels} channels")]
    IndexOutOfRange { index: usize, channels: usize },
    #[error("class {class} has {have} samples, need at least {need}")]
    TooFewSamples { class: usize, have: usize, need: usize },
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("ROC needs positive and negative labels: {0}")]
    OneClassOnly(String),
    #[error("class {class} has {have} subjects, too few to split into {folds} folds")]
    TooFewSubjects { class: usize, have: usize, folds: usize },
    #[error("shape ledger mismatch at {stage}: expected {expected:?}, got {actual:?}")]
    ShapeLedgerMismatch {
        stage: String,
        expected: [usize; 4],
        actual: [usize; 4],
    },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("leakage: test subject {0} was used for fitting")]
    Leakage(String),
}

impl Error {
    /// True for errors that indicate a broken internal invariant rather than
    /// bad input data.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::ShapeLedgerMismatch { .. } | Error::Leakage(_) | Error::NotPositiveDefinite
        )
    }
}
