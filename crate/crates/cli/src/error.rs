use std::io;
use std::path::{Path, PathBuf};

use greedy_route::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint {0} not found; run `{1}` first or set its path in the config")]
    MissingCheckpoint(PathBuf, &'static str),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Core(#[from] Error),
    #[error("{policy}: {source}")]
    Policy { policy: String, source: Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for configuration problems, 3 for diverged runs, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        let core = match self {
            CliError::Config(_) | CliError::MissingCheckpoint(..) => return 2,
            CliError::Io { .. } => return 1,
            CliError::Core(e) | CliError::Policy { source: e, .. } => e,
        };
        match core {
            Error::DivergedIterate { .. } => 3,
            Error::GridTooSmall { .. }
            | Error::BadDimension(..)
            | Error::ResonantShift { .. }
            | Error::InvalidParameter(_)
            | Error::OddGrid(..)
            | Error::HierarchyMismatch(_)
            | Error::BadId { .. }
            | Error::BadTau(_)
            | Error::BadMode { .. }
            | Error::MissingSurrogate
            | Error::SearchTooLarge(_)
            | Error::KindMismatch { .. }
            | Error::GridMismatch { .. }
            | Error::ShapeMismatch(_) => 2,
            _ => 1,
        }
    }
}
