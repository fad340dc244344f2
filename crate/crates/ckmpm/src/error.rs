use std::path::PathBuf;

/// Failures surfaced by the command line, grouped by exit status.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure at step {step} (t = {time}): {source}")]
    Numerical { step: u64, time: f64, source: ckmpm_core::Error },

    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Format(String),
}

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    /// 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical { .. } => 3,
            AppError::Io { .. } | AppError::Format(_) => 4,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
