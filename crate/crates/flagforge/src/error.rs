//! Crate-wide error type with stable CLI exit-code mapping.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the workbench. Contract violations exit with code 1,
/// environment problems (missing compiler, unreachable server, I/O) with 2.
#[derive(Debug)]
pub enum Error {
    /// An identifier was registered twice.
    DuplicateId(String),
    UnknownWorkload(String),
    UnknownDataset(String),
    UnknownEntry(String),
    UnknownPoint(String),
    /// A rendered token did not match any descriptor of the flag space.
    UnknownFlag { token: String, position: usize },
    /// No flag-space description covers the requested compiler.
    NoFlagSpace(String),
    /// Compiler version outside every descriptor's declared range.
    VersionOutOfRange { compiler: String, version: String },
    /// Malformed meta, feature file or stored record.
    InvalidData(String),
    /// Generic precondition violation (bad argument, empty input, ...).
    Contract(String),
    /// Missing compiler, unreachable server, unusable platform.
    Environment(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl Error {
    /// Exit code for the CLI: 1 = contract error, 2 = environment error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Environment(_) | Error::Io(_) => 2,
            _ => 1,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Error {
        Error::Contract(msg.into())
    }

    pub fn environment(msg: impl Into<String>) -> Error {
        Error::Environment(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidData(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DuplicateId(id) => write!(f, "identifier already registered: {id}"),
            Error::UnknownWorkload(id) => write!(f, "unknown workload: {id}"),
            Error::UnknownDataset(id) => write!(f, "unknown dataset: {id}"),
            Error::UnknownEntry(id) => write!(f, "unknown experiment entry: {id}"),
            Error::UnknownPoint(id) => write!(f, "unknown experiment point: {id}"),
            Error::UnknownFlag { token, position } => {
                write!(f, "unknown flag token {token:?} at position {position}")
            }
            Error::NoFlagSpace(id) => write!(f, "no flag-space description for compiler: {id}"),
            Error::VersionOutOfRange { compiler, version } => {
                write!(f, "version {version} of {compiler} outside all described ranges")
            }
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::Contract(msg) => write!(f, "{msg}"),
            Error::Environment(msg) => write!(f, "{msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
