use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids do not match")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("parity violation: {0}")]
    Parity(String),
    #[error("point outside the admissible region: {0}")]
    OutsideDomain(String),
    #[error("imaginary residue {residue:.3e} exceeds tolerance {tolerance:.1e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
