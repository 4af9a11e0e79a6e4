use std::fmt;
use std::process::ExitCode;

/// A failed command with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, config values or input data; exit status 2.
    Usage,
    /// A computation or output write failed; exit status 1.
    Failure,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        CliError { kind: ErrorKind::Usage, message: message.to_string() }
    }

    pub fn failure(message: impl fmt::Display) -> Self {
        CliError { kind: ErrorKind::Failure, message: message.to_string() }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self.kind {
            ErrorKind::Usage => ExitCode::from(2),
            ErrorKind::Failure => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Tags core errors by the stage that produced them.
pub trait Stage<T> {
    /// Reading or validating inputs.
    fn input(self) -> CliResult<T>;
    /// Computing or writing results.
    fn compute(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> Stage<T> for Result<T, E> {
    fn input(self) -> CliResult<T> {
        self.map_err(CliError::usage)
    }

    fn compute(self) -> CliResult<T> {
        self.map_err(CliError::failure)
    }
}
