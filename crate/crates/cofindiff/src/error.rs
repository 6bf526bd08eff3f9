use std::path::PathBuf;

/// Top-level error type. The CLI maps categories to exit codes:
/// validation -> 1, runtime -> 2, corruption -> 3.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] cofindiff_core::CoreError),
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse failure: {0}")]
    Csv(String),
    #[error("{rows} of {total} rows failed to parse (>1% threshold); first errors:\n{}", .sample.join("\n"))]
    TooManyBadRows {
        rows: usize,
        total: usize,
        sample: Vec<String>,
    },
    #[error("missing upstream artifact {path}: run the `{producer}` stage first")]
    MissingUpstream { path: PathBuf, producer: String },
    #[error("checkpoint corruption: {0}")]
    Corrupt(String),
    #[error("tensor backend error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Other(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) | AppError::Csv(_) | AppError::TooManyBadRows { .. } => 1,
            AppError::Corrupt(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
