use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid band {lo_hz}-{hi_hz} Hz for sample rate {sample_rate_hz} Hz")]
    InvalidBand {
        lo_hz: f64,
        hi_hz: f64,
        sample_rate_hz: f64,
    },

    #[error("signal too short: need at least {required} samples, got {available}")]
    TooShort { required: usize, available: usize },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("channel mismatch: expected {expected:?}, got {found:?}")]
    ChannelMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("band {0} contains no frequency bins")]
    DegenerateBand(String),

    #[error("invalid cohort spec: {0}")]
    Spec(String),

    #[error("impostor pool too small: need {required}, have {available}")]
    InsufficientPool { required: usize, available: usize },

    #[error("impostor pool contains instances of owner {0}")]
    Contamination(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),

    #[error("feature schema mismatch: {0}")]
    Schema(String),

    #[error("malformed model payload: {0}")]
    Format(String),

    #[error("unsupported model format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u32 },

    #[error("search budget exhausted before any evaluation completed ({evaluated} started)")]
    NoModel { evaluated: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}
