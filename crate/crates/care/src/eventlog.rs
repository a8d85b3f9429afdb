//! Append-only session logs: `<log_dir>/<session_id>.jsonl`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use care_core::telemetry::{parse_log, EventRecord, TelemetryError};

use crate::error::{CareError, Result};

/// Writes one JSON line and flushes it.
pub fn append_event(sink: &mut impl Write, event: &EventRecord) -> io::Result<()> {
    let mut line = event.to_json_line();
    line.push('\n');
    sink.write_all(line.as_bytes())?;
    sink.flush()
}

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

/// An open session log file.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn open(dir: &Path, session_id: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let path = log_path(dir, session_id);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EventLog { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &EventRecord) -> io::Result<()> {
        append_event(&mut self.file, event)
    }
}

pub fn read_log(path: &Path) -> Result<Vec<EventRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CareError::io(path, e))?;
    parse_log(&text).map_err(|e| match e {
        TelemetryError::Parse { line, message } => CareError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other.into(),
    })
}

/// Every `*.jsonl` file in `dir` (file-name order), or the single file when
/// `dir` is a file.
pub fn read_logs(dir: &Path) -> Result<Vec<EventRecord>> {
    if dir.is_file() {
        return read_log(dir);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CareError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_log(&p)?);
    }
    Ok(out)
}
