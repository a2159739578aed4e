use thiserror::Error;

/// Errors raised by the library. Runtime protocol faults (routing dead ends,
/// flood gaps) are never errors; they are counted on the simulation state.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cell {path} contains no sensors (raise tau or resample)")]
    EmptyCell { path: String },

    #[error("cell {path} has no sensor left to act as representative")]
    NoRepresentative { path: String },

    #[error("schedule overflow at depth {depth}: {what} is not finite")]
    ScheduleOverflow { depth: usize, what: &'static str },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
