use std::path::PathBuf;

/// Process exit statuses.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum VidaError {
    #[error(transparent)]
    Core(#[from] vida_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

pub type Result<T, E = VidaError> = std::result::Result<T, E>;

impl VidaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VidaError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl std::fmt::Display) -> Self {
        VidaError::Format { path: path.into(), detail: detail.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            VidaError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            VidaError::GradCheck(_) => EXIT_NUMERIC,
            VidaError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }

    /// Short machine-readable tag printed before the message.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_NUMERIC => "numeric",
            EXIT_USAGE => "usage",
            _ => "data",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_failure_class() {
        assert_eq!(VidaError::from(vida_core::Error::NonFiniteLoss(3)).exit_code(), EXIT_NUMERIC);
        assert_eq!(VidaError::from(vida_core::Error::EmptyInput).exit_code(), EXIT_DATA);
        assert_eq!(VidaError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(VidaError::Config("bad".into()).kind(), "data");
    }
}
