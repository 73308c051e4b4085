use std::path::PathBuf;

use crate::binfmt::FormatError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// A text record that failed to parse; `line` counts from 1.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct TextError {
    pub line: usize,
    pub reason: String,
}

impl TextError {
    pub fn new(line: usize, reason: impl Into<String>) -> Self {
        Self {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] protolatent_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}: {source}", path.display())]
    Text { path: PathBuf, source: TextError },
}

impl CliError {
    /// 2 for configuration problems, 3 for numeric failures, 4 for file
    /// access and file format problems.
    pub fn exit_code(&self) -> i32 {
        use protolatent_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Diverged { .. } | E::NonFinite | E::RankDeficient { .. }) => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } | CliError::Text { .. } => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_family() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(protolatent_core::Error::EmptyDataset).exit_code(), 2);
        assert_eq!(CliError::Core(protolatent_core::Error::Diverged { epoch: 3 }).exit_code(), 3);
        let io = CliError::Io {
            path: "a".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        };
        assert_eq!(io.exit_code(), 4);
    }
}
