//! Append-only campaign store: one JSON object per line, one file per stream.
//!
//! ```text
//! <dir>/meta.json        campaign identity (config hash, corpus, rounds)
//! <dir>/attempts.jsonl   AttemptRecord lines
//! <dir>/status.jsonl     StatusEvent lines, one per finished (theorem, round)
//! <dir>/audit.jsonl      audit sample and verdict events
//! <dir>/store.lock       held by the single writer
//! ```

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::audit::AuditEvent;
use crate::orchestrator::{AttemptRecord, Stage, StatusEvent};

pub const META_FILE: &str = "meta.json";
pub const ATTEMPTS_FILE: &str = "attempts.jsonl";
pub const STATUS_FILE: &str = "status.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
const LOCK_FILE: &str = "store.lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("store {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("{file}:{line}: corrupt store line: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("store metadata already written")]
    MetaExists,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundInfo {
    pub label: String,
    pub stage: Stage,
    pub model: String,
    pub max_interactions: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub format: u32,
    pub config_hash: String,
    pub corpus_fingerprint: String,
    pub corpus_root: PathBuf,
    pub corpus_size: usize,
    pub rounds: Vec<RoundInfo>,
}

/// An append-only JSON-lines file. Every append is all-or-nothing: on a
/// failed write the file is cut back to its previous length.
#[derive(Debug)]
pub struct JsonlLog {
    path: PathBuf,
    file: File,
    len: u64,
    quota: Option<u64>,
    sync: bool,
}

impl JsonlLog {
    /// Opens (creating if needed) and drops a torn trailing line, if any.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(path))?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1) as u64;
        if complete != bytes.len() as u64 {
            tracing::warn!(
                "{}: dropping {} bytes of incomplete trailing line",
                path.display(),
                bytes.len() as u64 - complete
            );
            file.set_len(complete).map_err(io_err(path))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            len: complete,
            quota: None,
            sync: true,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len_bytes(&self) -> u64 {
        self.len
    }

    /// Caps the file size; a write crossing the cap fails like a full disk.
    pub fn set_byte_quota(&mut self, quota: Option<u64>) {
        self.quota = quota;
    }

    /// Turns per-append fsync on or off.
    pub fn set_sync(&mut self, sync: bool) {
        self.sync = sync;
    }

    pub fn append<T: Serialize>(&mut self, items: &[T]) -> Result<(), StoreError> {
        let mut buf = Vec::new();
        for item in items {
            serde_json::to_writer(&mut buf, item).map_err(|e| StoreError::Io {
                path: self.path.clone(),
                source: io::Error::other(e),
            })?;
            buf.push(b'\n');
        }
        self.append_raw(&buf)
    }

    fn append_raw(&mut self, buf: &[u8]) -> Result<(), StoreError> {
        let result = self.write_within_quota(buf);
        match result {
            Ok(()) => {
                self.len += buf.len() as u64;
                Ok(())
            }
            Err(source) => {
                let _ = self.file.set_len(self.len);
                let _ = self.file.seek(SeekFrom::End(0));
                Err(StoreError::Io {
                    path: self.path.clone(),
                    source,
                })
            }
        }
    }

    fn write_within_quota(&mut self, buf: &[u8]) -> io::Result<()> {
        if let Some(q) = self.quota {
            let room = q.saturating_sub(self.len) as usize;
            if buf.len() > room {
                self.file.write_all(&buf[..room])?;
                return Err(io::Error::new(io::ErrorKind::StorageFull, "no space left on device"));
            }
        }
        self.file.write_all(buf)?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }

    fn truncate_to(&mut self, len: u64) -> Result<(), StoreError> {
        self.file.set_len(len).map_err(io_err(&self.path))?;
        self.len = len;
        Ok(())
    }
}

/// Complete lines of a JSON-lines file; a missing file reads as empty.
pub fn read_lines(path: &Path) -> Result<Vec<String>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    Ok(text[..complete].lines().map(str::to_string).collect())
}

fn parse_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                file: name.clone(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Point-in-time view of a store, read up to the last complete line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreSnapshot {
    pub meta: Option<StoreMeta>,
    pub records: Vec<AttemptRecord>,
    pub statuses: Vec<StatusEvent>,
    pub audit: Vec<AuditEvent>,
}

pub fn read_meta(dir: &Path) -> Result<Option<StoreMeta>, StoreError> {
    let path = dir.join(META_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| StoreError::Corrupt {
            file: META_FILE.into(),
            line: e.line(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// Reads a store without taking the writer lock.
pub fn read_snapshot(dir: &Path) -> Result<StoreSnapshot, StoreError> {
    Ok(StoreSnapshot {
        meta: read_meta(dir)?,
        records: parse_lines(&dir.join(ATTEMPTS_FILE))?,
        statuses: parse_lines(&dir.join(STATUS_FILE))?,
        audit: parse_lines(&dir.join(AUDIT_FILE))?,
    })
}

/// Removes the `timing` member of every JSON line, for run-to-run comparison.
pub fn canonical_lines(path: &Path) -> Result<Vec<String>, StoreError> {
    read_lines(path)?
        .into_iter()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                file: path.display().to_string(),
                line: 0,
                message: e.to_string(),
            })?;
            if let Some(obj) = v.as_object_mut() {
                obj.remove("timing");
            }
            Ok(v.to_string())
        })
        .collect()
}

/// Writer handle. Holds an exclusive lock on `store.lock` while open.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    attempts: JsonlLog,
    status: JsonlLog,
    audit: JsonlLog,
    _lock: File,
}

impl Store {
    /// Opens or creates a store. Attempt records left behind by an
    /// interrupted commit (no matching status line) are discarded.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let lock_path = dir.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(StoreError::Locked(dir.to_path_buf())),
            Err(TryLockError::Error(e)) => return Err(io_err(&lock_path)(e)),
        }
        let mut store = Self {
            dir: dir.to_path_buf(),
            attempts: JsonlLog::open(&dir.join(ATTEMPTS_FILE))?,
            status: JsonlLog::open(&dir.join(STATUS_FILE))?,
            audit: JsonlLog::open(&dir.join(AUDIT_FILE))?,
            _lock: lock,
        };
        store.drop_uncommitted_attempts()?;
        Ok(store)
    }

    fn drop_uncommitted_attempts(&mut self) -> Result<(), StoreError> {
        let statuses: Vec<StatusEvent> = parse_lines(self.status.path())?;
        let closed: HashSet<(String, String)> = statuses.into_iter().map(|s| (s.theorem_id, s.round)).collect();
        let lines = read_lines(self.attempts.path())?;
        let mut keep = lines.len();
        while keep > 0 {
            let rec: AttemptRecord = serde_json::from_str(&lines[keep - 1]).map_err(|e| StoreError::Corrupt {
                file: ATTEMPTS_FILE.into(),
                line: keep,
                message: e.to_string(),
            })?;
            if closed.contains(&(rec.theorem_id, rec.round)) {
                break;
            }
            keep -= 1;
        }
        if keep < lines.len() {
            tracing::warn!(
                "discarding {} attempt records of an interrupted commit",
                lines.len() - keep
            );
            let len: u64 = lines[..keep].iter().map(|l| l.len() as u64 + 1).sum();
            self.attempts.truncate_to(len)?;
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn meta(&self) -> Result<Option<StoreMeta>, StoreError> {
        read_meta(&self.dir)
    }

    pub fn write_meta(&mut self, meta: &StoreMeta) -> Result<(), StoreError> {
        let path = self.dir.join(META_FILE);
        if path.exists() {
            return Err(StoreError::MetaExists);
        }
        let tmp = self.dir.join("meta.json.tmp");
        let mut text = serde_json::to_string_pretty(meta).map_err(|e| StoreError::Io {
            path: path.clone(),
            source: io::Error::other(e),
        })?;
        text.push('\n');
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    pub fn append_record(&mut self, record: &AttemptRecord) -> Result<(), StoreError> {
        self.attempts.append(std::slice::from_ref(record))
    }

    /// Durably appends a theorem's attempts for one round, then its status line.
    pub fn commit(&mut self, records: &[AttemptRecord], status: &StatusEvent) -> Result<(), StoreError> {
        self.attempts.append(records)?;
        self.status.append(std::slice::from_ref(status))
    }

    pub fn append_audit(&mut self, event: &AuditEvent) -> Result<(), StoreError> {
        self.audit.append(std::slice::from_ref(event))
    }

    pub fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        read_snapshot(&self.dir)
    }

    pub fn attempts_log_mut(&mut self) -> &mut JsonlLog {
        &mut self.attempts
    }

    /// Applies a byte cap to every log file (see [`JsonlLog::set_byte_quota`]).
    pub fn set_byte_quota(&mut self, quota: Option<u64>) {
        self.attempts.set_byte_quota(quota);
        self.status.set_byte_quota(quota);
        self.audit.set_byte_quota(quota);
    }

    pub fn set_sync(&mut self, sync: bool) {
        self.attempts.set_sync(sync);
        self.status.set_sync(sync);
        self.audit.set_sync(sync);
    }
}
