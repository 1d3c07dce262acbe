use std::fmt;

/// Failure of a CLI run, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 1).
    Usage(String),
    /// Missing, malformed or stale inputs, I/O failures (exit 2).
    Data(String),
    /// A numerical procedure failed (exit 3).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn stale(what: impl fmt::Display, stage: &str) -> Self {
        CliError::Data(format!("{what} is stale; regenerate it with `romcp {stage}`"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<romcp::Error> for CliError {
    fn from(e: romcp::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
