//! Config-driven experiments around the `patcirc` library: phantom, forward, invert.

pub mod checks;
pub mod config;
pub mod io;
pub mod run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
    #[error("checksum mismatch: manifest has {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error(transparent)]
    Lib(#[from] patcirc::Error),
    #[error("selftest failed: {0}")]
    Selftest(String),
}
