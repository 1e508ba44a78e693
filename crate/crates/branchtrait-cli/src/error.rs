use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] branchtrait::Error),
    #[error("study failed: {0}")]
    Study(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for bad input, 3 for a failed study, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use branchtrait::Error as E;
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Model(E::Parameter(_) | E::Configuration(_) | E::Domain(_) | E::Parse { .. } | E::Consistency(_)) => 2,
            HarnessError::Study(_) => 3,
            _ => 1,
        }
    }
}
