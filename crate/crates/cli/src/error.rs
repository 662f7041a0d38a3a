use std::path::Path;

use striplearn::pddl::PddlError;
use striplearn::simulator::SimError;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Parse(String),
    Config(String),
    /// The run finished but produced nothing usable.
    Empty(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn pddl(path: &Path, e: PddlError) -> Self {
        CliError::Parse(format!("{}: {e}", path.display()))
    }

    pub fn sim(path: Option<&Path>, e: SimError) -> Self {
        let at = path.map(|p| format!("{}: ", p.display())).unwrap_or_default();
        match e {
            SimError::Io(e) => CliError::Io(format!("{at}{e}")),
            SimError::Pddl(_) | SimError::TraceFormat { .. } => CliError::Parse(format!("{at}{e}")),
            _ => CliError::Config(format!("{at}{e}")),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Config(_) => 3,
            CliError::Empty(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Empty(m) => write!(f, "empty result: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
