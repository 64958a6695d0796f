use std::io;
use std::path::{Path, PathBuf};

use degkit_core::Error as CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: CoreError },
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{0}")]
    Usage(String),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, message: impl ToString) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 for bad input, 2 for runtime failures, 3 for
    /// oracle mismatches.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 1,
            Error::Io { .. } => 2,
            Error::Parse { .. } | Error::Usage(_) => 1,
            Error::Input { source, .. } | Error::Core(source) => {
                if is_input_error(source) {
                    1
                } else {
                    2
                }
            }
            Error::OracleMismatch(_) => 3,
        }
    }
}

fn is_input_error(e: &CoreError) -> bool {
    use CoreError::*;
    matches!(
        e,
        SeqDiscontinuity { .. }
            | InvalidRecord { .. }
            | MalformedLine { .. }
            | InfeasibleSpec(_)
            | MissingLatency(_)
            | MissingBranchOutcome { .. }
            | InvalidConfig(_)
            | RegisterOutOfRange { .. }
            | TraceTooLarge { .. }
            | WrongPipeline(_)
            | MalformedBlock { .. }
            | InvalidScenario(_)
            | ConflictingOverride(_)
            | RuleConflict { .. }
            | EmptyCrack
            | DigestMismatch
    )
}
