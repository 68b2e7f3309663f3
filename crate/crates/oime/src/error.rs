use std::path::{Path, PathBuf};

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Failures of the command-line tools and the service, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// A file parsed but its content is wrong.
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: oime_core::Error },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error(transparent)]
    Core(#[from] oime_core::Error),

    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    /// 2 usage, 3 data, 4 runtime or numeric failure.
    pub fn exit_code(&self) -> i32 {
        use oime_core::Error as E;
        match self {
            AppError::Usage(_) => 2,
            AppError::Io { .. } | AppError::Data { .. } | AppError::Json { .. } | AppError::Csv { .. } => 3,
            AppError::Core(E::Config(_)) => 2,
            AppError::Core(E::NonFinite(_)) | AppError::Runtime(_) => 4,
            AppError::Core(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
        move |source| AppError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn data(path: &Path) -> impl FnOnce(oime_core::Error) -> AppError + '_ {
        move |source| AppError::Data { path: path.to_path_buf(), source }
    }
}
