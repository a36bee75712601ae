use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("gravity estimate is not initialized")]
    GravityNotReady,

    #[error("vibration window is empty")]
    EmptyWindow,

    #[error("invalid depth {0} m, depth must be positive")]
    InvalidDepth(f64),

    #[error("pixel ({u}, {v}) is outside a {width}x{height} frame")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },

    #[error("point is behind the camera (Z = {0})")]
    BehindCamera(f64),

    #[error("invalid calibration: {0}")]
    Calibration(String),

    #[error("end of detection stream at frame {0}")]
    EndOfStream(u64),

    #[error("detection protocol violation: {0}")]
    Protocol(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown category id {0}")]
    Category(i64),

    #[error("{file}:{line}: coordinate {value} outside [0, 1]")]
    Range {
        file: String,
        line: usize,
        value: f64,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{source_name}:{line}: timestamp {t} does not increase")]
    Order {
        source_name: String,
        line: usize,
        t: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command line tool: 1 evaluation failure,
    /// 2 I/O or malformed input, 3 detection protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Protocol(_) | Error::EndOfStream(_) => 3,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Format { .. }
            | Error::Order { .. }
            | Error::Range { .. }
            | Error::Category(_)
            | Error::Calibration(_)
            | Error::Config(_) => 2,
            _ => 1,
        }
    }
}
