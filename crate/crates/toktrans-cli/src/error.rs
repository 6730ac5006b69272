//! Harness errors carrying a stable machine-readable tag. The binary prints
//! one line, `error[tag]: message`, on stderr and exits nonzero.

use std::fmt;
use std::io;
use std::path::Path;

use toktrans_core::CoreError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug)]
pub struct CliError {
    tag: &'static str,
    message: String,
}

impl CliError {
    pub fn new(tag: &'static str, message: impl Into<String>) -> Self {
        CliError { tag, message: message.into() }
    }

    pub fn tag(&self) -> &'static str {
        self.tag
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    pub fn args(message: impl Into<String>) -> Self {
        Self::new("args", message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn corpus(message: impl Into<String>) -> Self {
        Self::new("corpus", message)
    }

    pub fn checkpoint(message: impl Into<String>) -> Self {
        Self::new("checkpoint", message)
    }

    pub fn train(message: impl Into<String>) -> Self {
        Self::new("train", message)
    }

    pub fn io(action: &str, path: &Path, err: io::Error) -> Self {
        Self::new("io", format!("{action} {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.tag, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        CliError::new("core", err.to_string())
    }
}
