use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical blowup: {0}")]
    Blowup(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Blowup(_) => EXIT_BLOWUP,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<nldiff::Error> for CliError {
    fn from(e: nldiff::Error) -> Self {
        match e {
            nldiff::Error::Io(m) => CliError::Io(m),
            e @ nldiff::Error::Blowup { .. } => CliError::Blowup(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
