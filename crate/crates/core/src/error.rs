use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// `exit_code` maps each variant onto the CLI contract: 2 for configuration
/// problems, 3 for numeric failures, 4 for partial probe runs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric failure in {context}: {detail}")]
    Numeric {
        context: String,
        detail: String,
        /// Objective or loss values recorded up to the failure.
        history: Vec<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed container {path}: {detail}")]
    Container { path: PathBuf, detail: String },

    #[error("probe finished with {failed} of {total} estimates failing")]
    PartialProbe { failed: usize, total: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dimension(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            detail: detail.into(),
            history: Vec::new(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } => 3,
            Error::PartialProbe { .. } => 4,
            _ => 2,
        }
    }
}
