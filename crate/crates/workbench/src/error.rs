use std::fmt;

/// Exit code 1.
pub const EXIT_USAGE: i32 = 1;
/// Exit code 2.
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration.
    Usage(String),
    /// I/O, format, numerical or domain failure while running.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

impl From<atkd_core::Error> for CliError {
    fn from(e: atkd_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<atkd_model::ModelError> for CliError {
    fn from(e: atkd_model::ModelError) -> Self {
        match e {
            atkd_model::ModelError::Config(m) => CliError::Usage(m),
            e => CliError::Failure(e.to_string()),
        }
    }
}

impl From<atkd_engine::EngineError> for CliError {
    fn from(e: atkd_engine::EngineError) -> Self {
        match e {
            atkd_engine::EngineError::Config(m) => CliError::Usage(m),
            atkd_engine::EngineError::Model(m) => m.into(),
            e => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}
