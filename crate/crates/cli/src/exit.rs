use std::fmt;

use tsvd_core::Error;

pub const USAGE: u8 = 1;
pub const PARSE: u8 = 2;
pub const DIMS: u8 = 3;
pub const IO: u8 = 4;
pub const MANIFEST: u8 = 5;
pub const SELFTEST: u8 = 6;

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(PARSE, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(IO, message)
    }

    pub fn manifest(message: impl Into<String>) -> Self {
        Self::new(MANIFEST, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Csv(_) => IO,
            Error::Idx(_) | Error::Container(_) | Error::NonFinite { .. } => PARSE,
            Error::RangeOutOfBounds { .. } => USAGE,
            Error::Shape(_)
            | Error::DimensionMismatch(_)
            | Error::TooLargeForReference { .. }
            | Error::Integrity(_)
            | Error::Decomposition { .. }
            | Error::RankOutOfRange { .. }
            | Error::NotOrthonormal { .. }
            | Error::ZeroFeature { .. } => DIMS,
        };
        CliError::new(code, e.to_string())
    }
}
