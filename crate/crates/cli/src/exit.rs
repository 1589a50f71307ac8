use std::fmt;

use docclean::{CheckpointError, Error};

pub const USAGE: i32 = 2;
pub const RUNTIME: i32 = 3;

/// A bad invocation or configuration detected by the front end itself.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Exit code for a failed command.
pub fn code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<Usage>().is_some() {
        return USAGE;
    }
    if err.downcast_ref::<CheckpointError>().is_some() {
        return USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::Dataset(_)
            | Error::Checkpoint(_)
            | Error::ChannelMismatch { .. }
            | Error::NonBinary(_)
            | Error::DegenerateGroundTruth,
        ) => USAGE,
        _ => RUNTIME,
    }
}

/// Writes to stdout, treating a closed pipe as success.
pub fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
