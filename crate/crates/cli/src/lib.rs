//! Command-line front end for `circsos`: point evaluation, threshold
//! reports, breakpoint checks, certificate bundles and the table regression
//! harness.

pub mod commands;
pub mod config;
pub mod fixture;
pub mod table;

pub use commands::{run, Cli};
pub use config::{OutputFormat, RunConfig};

/// Exit codes shared by every subcommand.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const UNCONFIRMED: i32 = 3;
    pub const SOLVER: i32 = 4;
    pub const FIXTURE_MISSING: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("fixture not found: {0}")]
    FixtureMissing(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error(transparent)]
    Core(#[from] circsos::Error),
    #[error("i/o: {0}")]
    Io(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => exit::USAGE,
            CliError::FixtureMissing(_) | CliError::Fixture(_) => exit::FIXTURE_MISSING,
            CliError::Core(circsos::Error::InvalidArgument(_)) => exit::USAGE,
            CliError::Core(_) => exit::SOLVER,
            CliError::Io(_) | CliError::Internal(_) => exit::FAILURE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
