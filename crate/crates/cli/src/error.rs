use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration (exit code 2).
    Config(String),
    /// Unreadable, malformed or inconsistent data (exit code 3).
    Data(String),
    /// Non-finite or otherwise failed numerics (exit code 4).
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    pub fn parse(path: &Path, msg: impl fmt::Display) -> Self {
        CliError::Data(format!("{}: {msg}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<evslam_core::Error> for CliError {
    fn from(e: evslam_core::Error) -> Self {
        use evslam_core::Error as E;
        match e {
            E::InvalidConfig { .. } => CliError::Config(e.to_string()),
            E::NonFinite { .. } | E::EmptyParameterSpace => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Read a whole file, mapping failures to data errors.
pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
