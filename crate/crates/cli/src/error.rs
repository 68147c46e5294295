use std::fmt;

use riskvex::Error;

/// Exit statuses.
pub const EXIT_UNCERTIFIED: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Config { source: String, line: usize, message: String },
    Input(String),
}

impl CliError {
    pub fn config(source: &str, line: usize, message: impl Into<String>) -> Self {
        CliError::Config { source: source.to_string(), line, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input(_) => EXIT_INPUT,
            CliError::Core(e) => match e {
                Error::Uncertified { .. } => EXIT_UNCERTIFIED,
                Error::Parse { .. } | Error::Io(_) | Error::Contract(_) | Error::DimensionMismatch { .. } => EXIT_INPUT,
                _ => EXIT_NUMERICAL,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e @ Error::Uncertified { .. }) => write!(f, "refused: {e} (pass --force to run anyway)"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config { source, line, message } => write!(f, "{source}:{line}: {message}"),
            CliError::Input(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}
