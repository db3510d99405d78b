use std::fmt;

/// A failed command, classified for the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or values (exit 1).
    Config(String),
    /// Anything that went wrong while running a valid command (exit 2).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        };
        // diagnostics stay on one line
        f.write_str(&msg.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<sharedrec_core::Error> for CliError {
    fn from(e: sharedrec_core::Error) -> Self {
        match e {
            sharedrec_core::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
