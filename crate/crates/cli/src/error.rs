use std::path::PathBuf;

use finsler_core::GeometryError;
use thiserror::Error;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_NUMERIC_FAIL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_GATE: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Geometry(GeometryError::GateRefused(_)) => EXIT_GATE,
            CliError::Geometry(_) => EXIT_NUMERIC_FAIL,
        }
    }
}
