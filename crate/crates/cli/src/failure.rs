use std::fmt;
use std::path::PathBuf;

use mhcloc::Error;

/// Categorized command failure; each category has its own exit status.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or missing input files, all listed.
    Config(Vec<String>),
    /// An earlier stage's artifact is absent.
    MissingArtifact { path: PathBuf, run_first: &'static str },
    Core(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::MissingArtifact { .. } => 3,
            Failure::Core(Error::Provider(_)) => 5,
            Failure::Core(Error::Io { .. }) => 1,
            Failure::Core(_) => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Failure::Config(_) => "configuration error",
            Failure::MissingArtifact { .. } => "missing artifact",
            Failure::Core(Error::Provider(_)) => "cost provider error",
            Failure::Core(Error::Io { .. }) => "i/o error",
            Failure::Core(_) => "input data error",
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.category())?;
        match self {
            Failure::Config(issues) => {
                write!(f, "{} problem(s)", issues.len())?;
                for i in issues {
                    write!(f, "\n  - {i}")?;
                }
                Ok(())
            }
            Failure::MissingArtifact { path, run_first } => {
                write!(f, "{} not found; run `{run_first}` first", path.display())
            }
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}
