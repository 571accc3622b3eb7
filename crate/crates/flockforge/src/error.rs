//! Driver-level errors and their process exit codes.

use std::path::PathBuf;

#[derive(thiserror::Error, Debug)]
pub enum ForgeError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime divergence: {0}")]
    Divergence(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: record {record}: {message}")]
    Parse {
        path: PathBuf,
        record: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] flock_core::Error),
}

impl ForgeError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| ForgeError::Io { path, source }
    }
}

/// Process exit code policy: 0 success, 2 config error, 3 runtime
/// divergence, 4 I/O or file-format error, 1 anything else.
pub fn exit_code(err: &ForgeError) -> i32 {
    use flock_core::Error as Core;
    match err {
        ForgeError::Config(_) => 2,
        ForgeError::Divergence(_) => 3,
        ForgeError::Io { .. } | ForgeError::Parse { .. } => 4,
        ForgeError::Core(core) => match core {
            Core::Divergence(_) | Core::NonFiniteLoss { .. } => 3,
            Core::SamplerRejectionCap { .. } | Core::InvalidParam(_) => 2,
            _ => 1,
        },
    }
}
