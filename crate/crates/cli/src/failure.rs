//! Error to exit-code mapping: 2 usage, 3 I/O, 4 data format, 5 divergence.

use simpdom::Error;

pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const FORMAT: u8 = 4;
pub const DIVERGENCE: u8 = 5;
pub const INTERNAL: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: USAGE, error: anyhow::anyhow!(msg.into()) }
    }

    pub fn context(mut self, msg: impl std::fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(msg);
        self
    }
}

pub fn code_of(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::IncompatibleHead { .. } => USAGE,
        Error::Io { .. } => IO,
        Error::Parse { .. }
        | Error::Format { .. }
        | Error::Schema(_)
        | Error::Corrupt(_)
        | Error::Json(_)
        | Error::EmptyDocument(_) => FORMAT,
        Error::Divergence(_) => DIVERGENCE,
        _ => INTERNAL,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: code_of(&e), error: e.into() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self { code: FORMAT, error: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: IO, error: e.into() }
    }
}
