use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input; exit code 2.
    #[error("{0}")]
    Config(String),
    /// Simulation, fit or I/O failure; exit code 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }
}

impl From<fluxnoise::Error> for CliError {
    fn from(e: fluxnoise::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}
