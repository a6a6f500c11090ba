//! Crate-wide error type. Every variant carries a short machine-parsable code
//! that the CLI prints as `ERROR:<code>:<message>`.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    PpmFormat { path: PathBuf, msg: String },

    #[error("{path}:{line}: {msg}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("manifest references missing image file {path}")]
    MissingImage { path: PathBuf },

    #[error("{0}")]
    InvalidConfig(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("only one class present: {0}")]
    SingleClass(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("{family} family requires {field}, which is absent for patient {patient}")]
    MissingModality {
        family: String,
        field: String,
        patient: String,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("ensemble member {member} failed: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable code used in the CLI's `ERROR:<code>:` prefix.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO",
            Error::PpmFormat { .. } => "PPM_FORMAT",
            Error::ManifestParse { .. } => "MANIFEST_PARSE",
            Error::MissingImage { .. } => "MISSING_IMAGE",
            Error::InvalidConfig(_) => "BAD_CONFIG",
            Error::InvalidInput(_) => "BAD_INPUT",
            Error::SingleClass(_) => "SINGLE_CLASS",
            Error::NonFinite(_) => "NON_FINITE",
            Error::ShapeMismatch(_) => "SHAPE",
            Error::Diverged { .. } => "DIVERGED",
            Error::MissingInput(_) => "MISSING_INPUT",
            Error::MissingModality { .. } => "MISSING_MODALITY",
            Error::Degenerate(_) => "DEGENERATE",
            Error::Json { .. } => "JSON",
            Error::Checkpoint { .. } => "CHECKPOINT",
            Error::Member { source, .. } => source.code(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
