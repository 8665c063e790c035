use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] quasi2d::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 validation, 3 config, 4 numeric failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use quasi2d::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Config(_) => 3,
            CliError::Core(e) => match e {
                E::NotNeutral { .. } => 2,
                E::Geometry(_) | E::Parameter(_) | E::Soe(_) | E::Parse { .. } | E::LengthMismatch(..) => 3,
                E::Numeric(_) | E::Coincident(..) | E::OutOfSlab { .. } => 4,
                E::Io(_) | E::Csv(_) => 1,
            },
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}
