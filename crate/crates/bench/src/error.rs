use std::path::{Path, PathBuf};

/// Process exit codes of the `s2d` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    /// Malformed or inconsistent configuration, tasks or model files.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] s2d_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Runtime(String),
}

impl BenchError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use s2d_core::Error as E;
        match self {
            BenchError::Config(_) => exit::CONFIG,
            BenchError::Core(
                E::Validation(_)
                | E::Config(_)
                | E::CorruptHeader(_)
                | E::ShapeMismatch { .. }
                | E::Truncated { .. }
                | E::Json(_),
            ) => exit::CONFIG,
            _ => exit::RUNTIME,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
