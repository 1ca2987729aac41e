//! Append-only, hash-chained audit log.
//!
//! One JSON record per line. Each record's `self_digest` is the SHA-256 of
//! the canonical encoding of every other field, `prev_digest` included, so
//! editing, dropping or reordering a record breaks the chain at that record.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::domain::{Report, Timestamp};

const ZERO: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub index: u64,
    pub timestamp: Timestamp,
    /// Authenticated user, or `-`.
    pub user: String,
    pub event: String,
    pub outcome: Report,
    pub detail: String,
    pub prev_digest: String,
    pub self_digest: String,
}

#[derive(Serialize)]
struct Unsealed<'a> {
    index: u64,
    timestamp: Timestamp,
    user: &'a str,
    event: &'a str,
    outcome: Report,
    detail: &'a str,
    prev_digest: &'a str,
}

impl AuditRecord {
    fn digest(&self) -> String {
        let body = Unsealed {
            index: self.index,
            timestamp: self.timestamp,
            user: &self.user,
            event: &self.event,
            outcome: self.outcome,
            detail: &self.detail,
            prev_digest: &self.prev_digest,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&body).expect("serializable")))
    }

    /// Builds the record following `prev` (or the first record).
    pub fn seal(
        prev: Option<&AuditRecord>,
        timestamp: Timestamp,
        user: &str,
        event: &str,
        outcome: Report,
        detail: &str,
    ) -> Self {
        let mut r = AuditRecord {
            index: prev.map_or(0, |p| p.index + 1),
            timestamp,
            user: user.to_owned(),
            event: event.to_owned(),
            outcome,
            detail: detail.to_owned(),
            prev_digest: prev.map_or_else(|| ZERO.to_owned(), |p| p.self_digest.clone()),
            self_digest: String::new(),
        };
        r.self_digest = r.digest();
        r
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Result of checking a whole log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainStatus {
    pub count: u64,
    pub ok: bool,
    pub first_bad: Option<u64>,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("audit log {path} fails verification at record {index}")]
    Broken { path: PathBuf, index: u64 },
}

/// Checks a log's contents. A line that does not decode, is not in
/// canonical form, carries the wrong index, or fails either digest check
/// is the first bad record.
pub fn verify_bytes(data: &[u8]) -> (ChainStatus, Option<AuditRecord>) {
    let mut lines: Vec<&[u8]> = data.split(|b| *b == b'\n').collect();
    if lines.last() == Some(&&b""[..]) {
        lines.pop();
    }
    let count = lines.len() as u64;
    let mut prev: Option<AuditRecord> = None;
    for (i, line) in lines.into_iter().enumerate() {
        let i = i as u64;
        let good = std::str::from_utf8(line)
            .ok()
            .and_then(|s| serde_json::from_str::<AuditRecord>(s).ok().filter(|r| r.encode() == s))
            .filter(|r| {
                let expected_prev = prev.as_ref().map_or(ZERO, |p| p.self_digest.as_str());
                r.index == i && r.prev_digest == expected_prev && r.self_digest == r.digest()
            });
        match good {
            Some(r) => prev = Some(r),
            None => return (ChainStatus { count, ok: false, first_bad: Some(i) }, prev),
        }
    }
    (ChainStatus { count, ok: true, first_bad: None }, prev)
}

/// Verifies the log at `path`. A missing file is an error.
pub fn verify_audit_chain(path: &Path) -> Result<ChainStatus, AuditError> {
    let data = std::fs::read(path).map_err(|source| AuditError::Io { path: path.to_owned(), source })?;
    Ok(verify_bytes(&data).0)
}

/// Last `n` records as stored lines.
pub fn tail(path: &Path, n: usize) -> Result<Vec<String>, AuditError> {
    let io_err = |source| AuditError::Io { path: path.to_owned(), source };
    let file = File::open(path).map_err(io_err)?;
    let lines = BufReader::new(file).lines().collect::<Result<Vec<_>, _>>().map_err(io_err)?;
    Ok(lines[lines.len().saturating_sub(n)..].to_vec())
}

/// Writer end of a log. Every append is synced before it returns.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: File,
    last: Option<AuditRecord>,
}

impl AuditLog {
    /// Opens or creates the log, refusing one whose chain does not verify.
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        let io_err = |source| AuditError::Io { path: path.to_owned(), source };
        let data = match std::fs::read(path) {
            Ok(d) => d,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let (status, last) = verify_bytes(&data);
        if let Some(index) = status.first_bad {
            return Err(AuditError::Broken { path: path.to_owned(), index });
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        Ok(AuditLog { path: path.to_owned(), file, last })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.last.as_ref().map_or(0, |r| r.index + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.last.is_none()
    }

    pub fn append(
        &mut self,
        timestamp: Timestamp,
        user: &str,
        event: &str,
        outcome: Report,
        detail: &str,
    ) -> Result<&AuditRecord, AuditError> {
        let record = AuditRecord::seal(self.last.as_ref(), timestamp, user, event, outcome, detail);
        let mut line = record.encode();
        line.push('\n');
        let io_err = |source| AuditError::Io { path: self.path.clone(), source };
        self.file.write_all(line.as_bytes()).map_err(io_err)?;
        self.file.sync_data().map_err(io_err)?;
        Ok(self.last.insert(record))
    }
}
