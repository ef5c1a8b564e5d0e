use std::path::PathBuf;

/// Errors produced by the correction toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid preference: {0}")]
    InvalidPreference(String),

    #[error("bundle contains no tasks")]
    EmptyBundle,

    #[error("task `{id}`: {source}")]
    Task {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("minimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("invalid expert accuracy: {0}")]
    InvalidExpert(String),

    #[error("scenario generation failed: {0}")]
    GenerationFailed(String),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no evaluation data: {0}")]
    MissingEvaluationData(String),

    #[error("stale component cache: {0}")]
    StaleCache(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl std::fmt::Display, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_string(),
            message: message.into(),
        }
    }

    /// Wraps this error with the id of the task it belongs to.
    pub fn for_task(self, id: impl Into<String>) -> Self {
        Error::Task {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through task annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Task { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
