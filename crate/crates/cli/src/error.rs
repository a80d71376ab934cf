use std::fmt;
use std::path::PathBuf;

/// Failure of a CLI command. `Display` gives one line of the form
/// `error[<kind>]: <message>`.
#[derive(Debug)]
pub enum CliError {
    /// Every problem found while validating the configuration.
    Config(Vec<String>),
    MissingFile { role: &'static str, path: PathBuf },
    Io(PathBuf, String),
    Core(gcmt_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingFile { .. } => "missing-file",
            CliError::Io(..) => "io",
            CliError::Core(gcmt_core::Error::NonFiniteLoss { .. }) => "non-finite-loss",
            CliError::Core(gcmt_core::Error::Checkpoint(_)) => "checkpoint",
            CliError::Core(gcmt_core::Error::Parse(_)) => "dataset",
            CliError::Core(gcmt_core::Error::Io { .. }) => "io",
            CliError::Core(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingFile { .. } => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Config(problems) => problems.join("; "),
            CliError::MissingFile { role, path } => format!("{role} not found: {}", path.display()),
            CliError::Io(path, e) => format!("{}: {e}", path.display()),
            CliError::Core(e) => e.to_string(),
        };
        let one_line: String = msg.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }).collect();
        write!(f, "error[{}]: {one_line}", self.kind())
    }
}

impl std::error::Error for CliError {}

impl From<gcmt_core::Error> for CliError {
    fn from(e: gcmt_core::Error) -> Self {
        CliError::Core(e)
    }
}
