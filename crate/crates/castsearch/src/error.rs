use thiserror::Error;

/// Everything that can go wrong across the crate, from feature validation to
/// file parsing. Variants carry enough context to print a one-line diagnostic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero-norm {modality} vector")]
    ZeroNorm { modality: &'static str },

    #[error("non-finite {modality} vector")]
    NonFinite { modality: &'static str },

    #[error("portrait requires face feature (cast {0})")]
    PortraitWithoutFace(String),

    #[error("duplicate cast id {0}")]
    DuplicateCast(String),

    #[error("unknown cast id {0}")]
    UnknownCast(String),

    #[error("duplicate instance id {0}")]
    DuplicateInstance(String),

    #[error("instance {0} is already cached")]
    AlreadyCached(String),

    #[error("step {step} out of range for a series of length {len}")]
    StepOutOfRange { step: usize, len: usize },

    #[error("training loss became non-finite")]
    NonFiniteLoss,

    #[error("movie {0} has instances without ground truth; training needs labels")]
    MissingGroundTruth(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Tags a parse-stage error with its source location.
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
