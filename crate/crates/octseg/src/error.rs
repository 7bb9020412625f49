use std::path::{Path, PathBuf};

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for everything else that goes wrong at runtime.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] octseg_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: not a recognised file: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: corrupt file: {msg}", path.display())]
    Corrupt { path: PathBuf, msg: String },
    #[error("{}: invalid config at {pointer}: {msg}", path.display())]
    Config { path: PathBuf, pointer: String, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {msg}", path.display())]
    Png { path: PathBuf, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Usage(_) | Error::Core(octseg_core::Error::Config(_)) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Attaches a path to IO errors.
pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
