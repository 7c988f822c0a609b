use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] mixchart::Error),

    #[error("tolerance check failed: {0}")]
    Tolerance(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit code: 2 config, 3 tolerance, 4 convergence, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        use mixchart::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Domain { .. } | E::Unsupported(_) | E::GridTooSmall { .. }) => 2,
            CliError::Tolerance(_) | CliError::Core(E::Tolerance { .. } | E::Truncation { .. }) => 3,
            CliError::Core(E::Convergence { .. }) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
