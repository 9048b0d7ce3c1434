//! Exit codes: 0 success, 1 usage, 2 runtime or model failure, 3 I/O.

use std::fmt;

pub const USAGE: u8 = 1;
pub const RUNTIME: u8 = 2;
pub const IO: u8 = 3;

/// Marks an error as caused by the invocation rather than the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<linkswim::Error>() {
            return match e {
                linkswim::Error::Io { .. } | linkswim::Error::Json { .. } => IO,
                linkswim::Error::InvalidParameter(_) => USAGE,
                _ => RUNTIME,
            };
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
    }
    RUNTIME
}
