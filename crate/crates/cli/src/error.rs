use std::fmt;

use hrtf_core::cvae::CvaeError;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unusable input; exit code 1.
    User(String),
    /// A computation failed on valid input; exit code 2.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::User(m) | CliError::Internal(m) => m,
        };
        f.write_str(&msg.replace('\n', " "))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

pub trait Context<T> {
    fn user(self, what: &str) -> Result<T>;
    fn internal(self, what: &str) -> Result<T>;
}

impl<T, E: fmt::Display> Context<T> for std::result::Result<T, E> {
    fn user(self, what: &str) -> Result<T> {
        self.map_err(|e| CliError::User(format!("{what}: {e}")))
    }

    fn internal(self, what: &str) -> Result<T> {
        self.map_err(|e| CliError::Internal(format!("{what}: {e}")))
    }
}

/// Input-shaped model errors are the caller's; numeric failures are ours.
pub fn cvae(what: &str, e: CvaeError) -> CliError {
    match e {
        CvaeError::Numerics(_) | CvaeError::Dsp(_) => CliError::Internal(format!("{what}: {e}")),
        _ => CliError::User(format!("{what}: {e}")),
    }
}
