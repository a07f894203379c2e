use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A function was called with arguments that violate its preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violates a structural requirement (bad row, duplicate key, ...).
    #[error("invalid data{}: {msg}", location(.path, .line))]
    Data {
        path: Option<PathBuf>,
        line: Option<u64>,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(String),
}

fn location(path: &Option<PathBuf>, line: &Option<u64>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!(" at {}:{l}", p.display()),
        (Some(p), None) => format!(" in {}", p.display()),
        (None, Some(l)) => format!(" at line {l}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            path: None,
            line: None,
            msg: msg.into(),
        }
    }

    pub fn data_at(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Data {
            path: Some(path.into()),
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
