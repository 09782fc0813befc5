use std::fmt;

/// Failures of a CLI invocation, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration or arguments (exit code 2).
    Config(String),
    /// The experiment started but could not finish (exit code 3).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<abcsmc_core::Error> for CliError {
    fn from(e: abcsmc_core::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

/// Core errors raised while validating settings are configuration errors.
pub fn invalid(e: abcsmc_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
