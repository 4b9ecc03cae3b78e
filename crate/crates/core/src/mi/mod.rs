//! GDB machine-interface driver: record parsing, process control and
//! cassette replay.

mod cassette;
mod driver;
mod record;

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub use cassette::{Cassette, CASSETTE_VERSION};
pub use driver::{
    read_transcript, spawn_debugger, DebuggerConfig, DebuggerHandle, MiOutput,
    DEFAULT_COMMAND_TIMEOUT,
};
pub use record::{
    parse_mi_line, quote_c_string, AsyncKind, MiRecord, MiTuple, MiValue, RecordKind, StreamKind,
};

#[derive(Debug, Error)]
pub enum MiError {
    #[error("debugger not found: {}", .0.display())]
    DebuggerNotFound(PathBuf),
    #[error("target not found: {}", .0.display())]
    TargetNotFound(PathBuf),
    #[error("debugger could not load the target: {0}")]
    TargetLoadFailed(String),
    #[error("debugger did not print its prompt")]
    ProtocolHandshakeFailed,
    #[error("debugger exited")]
    DebuggerExited,
    #[error("debugger command timed out after {0:?}")]
    Timeout(Duration),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
