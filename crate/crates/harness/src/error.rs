use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] sara_core::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("checkpoint for step {step} not found at {path}")]
    MissingCheckpoint { step: u64, path: PathBuf },

    #[error("malformed metrics CSV at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("run failed at step {step}{}: {message}", layer.as_ref().map(|l| format!(", layer {l}")).unwrap_or_default())]
    RunFailed {
        step: u64,
        layer: Option<String>,
        message: String,
    },

    #[error("compare needs at least 2 summaries, got {0}")]
    TooFewRuns(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Stable machine-readable tag for CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Core(_) => "core",
            HarnessError::Config(_) => "config",
            HarnessError::Parse { .. } => "parse",
            HarnessError::MissingFile(_) => "missing_file",
            HarnessError::MissingCheckpoint { .. } => "missing_checkpoint",
            HarnessError::Csv { .. } => "csv",
            HarnessError::RunFailed { .. } => "run_failed",
            HarnessError::TooFewRuns(_) => "too_few_runs",
            HarnessError::Io { .. } => "io",
            HarnessError::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                HarnessError::MissingFile(path)
            } else {
                HarnessError::Io { path, source }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
