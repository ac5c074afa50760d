//! Crate-wide error type.
//!
//! Every failure is classified into one of a small set of kinds so the CLI
//! can map them onto distinct process exit codes (parse = 3, validation = 4,
//! capacity = 5).

use std::fmt;
use std::io;

/// Simulator error.
#[derive(Debug)]
pub enum Error {
    /// Invalid physical device parameter or unrealizable optical state.
    Device(String),
    /// Argument outside the mathematical domain of an operation.
    Domain(String),
    /// Unsupported precision or out-of-range quantization level.
    Quant(String),
    /// A layer cannot be placed onto the optical core as requested.
    Mapping(String),
    /// A request exceeds the fixed capacity of the core (banks, arms).
    Capacity(String),
    /// Malformed input file (manifest, image, config).
    Parse(String),
    /// Structurally invalid model or configuration, with the offending
    /// layer index when known.
    Validation {
        layer: Option<usize>,
        message: String,
    },
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            layer: None,
            message: message.into(),
        }
    }

    pub fn validation_at(layer: usize, message: impl Into<String>) -> Self {
        Error::Validation {
            layer: Some(layer),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI (0 = ok, 2 = usage, 3 = parse,
    /// 4 = validation, 5 = capacity).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Io(_) => 3,
            Error::Device(_)
            | Error::Domain(_)
            | Error::Quant(_)
            | Error::Mapping(_)
            | Error::Validation { .. } => 4,
            Error::Capacity(_) => 5,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Device(m) => write!(f, "device error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Quant(m) => write!(f, "quantization error: {m}"),
            Error::Mapping(m) => write!(f, "mapping error: {m}"),
            Error::Capacity(m) => write!(f, "capacity error: {m}"),
            Error::Parse(m) => write!(f, "parse error: {m}"),
            Error::Validation {
                layer: Some(i),
                message,
            } => write!(f, "validation error at layer {i}: {message}"),
            Error::Validation {
                layer: None,
                message,
            } => write!(f, "validation error: {message}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
