use gazemtl::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_GRADCHECK: u8 = 5;
pub const EXIT_OTHER: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::GradCheck(_) => EXIT_GRADCHECK,
            CliError::Core(e) => match e {
                Error::Container(_) | Error::Dataset(_) | Error::Io { .. } | Error::MissingTarget(_) => EXIT_DATA,
                Error::NonFinite { .. } => EXIT_NUMERIC,
                Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_OTHER,
            },
        }
    }
}
