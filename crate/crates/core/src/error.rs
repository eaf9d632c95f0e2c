//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV header or schema entry did not line up with the declared schema.
    #[error("schema mismatch on column '{column}': {detail}")]
    SchemaMismatch { column: String, detail: String },

    /// A cell could not be parsed under its declared feature kind.
    #[error("row {row}, column '{column}': cannot parse '{value}' as {kind}")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
        kind: String,
    },

    /// No usable rows survived ingestion.
    #[error("dataset is empty{detail}")]
    EmptyDataset { detail: String },

    /// Classification needs at least two observed classes.
    #[error("dataset contains a single class '{class}'")]
    SingleClass { class: String },

    /// Stratified folding requires every class to fill every fold.
    #[error("class '{class}' has {size} members, fewer than {k} folds")]
    ClassTooSmall {
        class: String,
        size: usize,
        k: usize,
    },

    /// A per-class computation cannot form a neighbourhood.
    #[error("class '{class}' has a single member; cannot form a neighbourhood")]
    SingletonClass { class: String },

    /// Paired slices of different lengths, empty inputs, out-of-range
    /// parameters and similar caller mistakes.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The reference linear separator collapsed (zero weight vector).
    #[error("degenerate separator: {0}")]
    DegenerateSeparator(String),

    /// A metric needs both outcome groups present.
    #[error("need both misclassified and correct instances: {0}")]
    OneClassOutcome(String),

    /// An outer cross-validation fold could not be completed.
    #[error("outer fold {fold} could not be processed: {source}")]
    FoldFailed {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    /// A serialised artifact carries an unsupported format version.
    #[error("artifact version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    /// A serialised artifact is structurally broken.
    #[error("malformed artifact: {0}")]
    MalformedArtifact(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// An [`Error::Io`] carrying the offending path.
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// An [`Error::InvalidArgument`] from any message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
