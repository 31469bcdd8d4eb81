//! Append-only JSONL session logs on disk.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use atelier_core::engine::session::{parse_jsonl, LogEvent, SessionState};
use atelier_core::engine::EngineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: EngineError },
    #[error("{path}: seq {found} follows seq {previous}")]
    SeqGap { path: PathBuf, previous: u64, found: u64 },
    #[error("{path}: append of seq {found}, expected {expected}")]
    OutOfOrder { path: PathBuf, expected: u64, found: u64 },
}

/// What opening a log had to repair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Recovery {
    /// Bytes of a partial trailing line that were cut off.
    pub truncated_bytes: u64,
}

impl Recovery {
    pub fn repaired(&self) -> bool {
        self.truncated_bytes > 0
    }
}

#[derive(Debug)]
pub struct LogStore {
    path: PathBuf,
    file: File,
    fsync: bool,
    last_seq: u64,
}

impl LogStore {
    /// Creates an empty log, failing if the file exists.
    pub fn create(path: &Path, fsync: bool) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(path)
            .map_err(|source| StoreError::Io { path: path.to_owned(), source })?;
        Ok(LogStore { path: path.to_owned(), file, fsync, last_seq: 0 })
    }

    /// Opens an existing log, cutting a partial last line left by a crash.
    pub fn open(path: &Path, fsync: bool) -> Result<(Self, Vec<LogEvent>, Recovery), StoreError> {
        let io_err = |source| StoreError::Io { path: path.to_owned(), source };
        let mut file = OpenOptions::new().read(true).append(true).open(path).map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let recovery = Recovery { truncated_bytes: (bytes.len() - complete) as u64 };
        if recovery.repaired() {
            file.set_len(complete as u64).map_err(io_err)?;
            file.seek(SeekFrom::End(0)).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        let text = String::from_utf8_lossy(&bytes[..complete]);
        let events = parse_jsonl(&text).map_err(|source| StoreError::Log { path: path.to_owned(), source })?;
        let mut previous = 0;
        for e in &events {
            if e.seq != previous + 1 {
                return Err(StoreError::SeqGap { path: path.to_owned(), previous, found: e.seq });
            }
            previous = e.seq;
        }
        Ok((LogStore { path: path.to_owned(), file, fsync, last_seq: previous }, events, recovery))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Writes one event as a line; with `fsync` the data reaches the disk
    /// before this returns.
    pub fn append(&mut self, event: &LogEvent) -> Result<u64, StoreError> {
        if event.seq != self.last_seq + 1 {
            return Err(StoreError::OutOfOrder { path: self.path.clone(), expected: self.last_seq + 1, found: event.seq });
        }
        let io_err = |source| StoreError::Io { path: self.path.clone(), source };
        let mut line = event.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err)?;
        self.file.flush().map_err(io_err)?;
        if self.fsync {
            self.file.sync_data().map_err(io_err)?;
        }
        self.last_seq = event.seq;
        Ok(event.seq)
    }
}

/// Folds the log at `path` into a session state.
pub fn session_load(path: &Path) -> Result<SessionState, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io { path: path.to_owned(), source })?;
    let events = parse_jsonl(&text).map_err(|source| StoreError::Log { path: path.to_owned(), source })?;
    SessionState::fold(&events).map_err(|source| StoreError::Log { path: path.to_owned(), source })
}
