use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("system is not charge neutral (residual {residual:e})")]
    NotNeutral { residual: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("particles {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("particle {index} at z={z} lies outside [0, {lz}]")]
    OutOfSlab { index: usize, z: f64, lz: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sum-of-exponentials table: {0}")]
    Soe(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
