//! The persistent store: one versioned JSON document holding the credential
//! table and the certificate repository.
//!
//! ```text
//! {
//!   "version": 1,
//!   "scheme": {"name": "md5-compat"},
//!   "registered_users": ["ali", ...],
//!   "pwd_db":   {"ali": "<hex digest>", ...},
//!   "salting":  {"ali": "<hex salt>", ...},
//!   "roles":    {"ali": "EndUser", ...},
//!   "repository": {...},
//!   "serial_counter": 1
//! }
//! ```
//!
//! Maps are ordered by key, so writing the same state twice yields the same
//! bytes. Loading rebuilds and re-checks every invariant.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Digest, Role, Salt, UserId};
use crate::hashing::HashScheme;
use crate::local_auth::CredentialTable;
use crate::repository::CertificateRepository;
use crate::session::Backend;

pub const STORE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreFile {
    version: u32,
    scheme: HashScheme,
    registered_users: BTreeSet<UserId>,
    pwd_db: BTreeMap<UserId, Digest>,
    salting: BTreeMap<UserId, Salt>,
    roles: BTreeMap<UserId, Role>,
    repository: CertificateRepository,
    serial_counter: u64,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("store {path}: not a store document: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("store {path}: version {found}, expected {STORE_VERSION}")]
    Version { path: PathBuf, found: u64 },
    #[error("store {path}: invariant {invariant} violated: {message}")]
    Invariant { path: PathBuf, invariant: &'static str, message: String },
}

impl StoreError {
    /// Name of the violated invariant, when that is why loading failed.
    pub fn invariant(&self) -> Option<&'static str> {
        match self {
            StoreError::Invariant { invariant, .. } => Some(invariant),
            _ => None,
        }
    }
}

/// Canonical bytes for `backend`.
pub fn encode(backend: &Backend) -> Vec<u8> {
    let t = &backend.table;
    let doc = StoreFile {
        version: STORE_VERSION,
        scheme: t.scheme(),
        registered_users: t.registered_users(),
        pwd_db: t.pwd_db(),
        salting: t.salting(),
        roles: t.roles(),
        repository: backend.repo.clone(),
        serial_counter: backend.repo.next_serial(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("store serializes");
    out.push(b'\n');
    out
}

/// Parses and validates store bytes. `path` is only used in errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Backend, StoreError> {
    let syntax = |e: serde_json::Error| StoreError::Syntax { path: path.to_owned(), message: e.to_string() };
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(syntax)?;
    let found = value.get("version").and_then(serde_json::Value::as_u64).unwrap_or(0);
    if found != u64::from(STORE_VERSION) {
        return Err(StoreError::Version { path: path.to_owned(), found });
    }
    let doc: StoreFile = serde_json::from_value(value).map_err(syntax)?;
    let invariant = |invariant, message: String| StoreError::Invariant { path: path.to_owned(), invariant, message };
    let table = CredentialTable::from_parts(doc.scheme, doc.registered_users, doc.pwd_db, doc.salting, doc.roles)
        .map_err(|e| invariant(e.name(), e.to_string()))?;
    doc.repository.check_invariants().map_err(|e| invariant(e.name(), e.to_string()))?;
    if doc.serial_counter != doc.repository.next_serial() {
        return Err(invariant(
            "serial-counter",
            format!("serial_counter {} disagrees with repository {}", doc.serial_counter, doc.repository.next_serial()),
        ));
    }
    Ok(Backend::new(table, doc.repository))
}

pub fn load(path: &Path) -> Result<Backend, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io { path: path.to_owned(), source })?;
    decode(&bytes, path)
}

/// Replaces the store atomically: write a sibling temp file, sync, rename.
pub fn persist(backend: &Backend, path: &Path) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io { path: path.to_owned(), source };
    let mut tmp_name = path.file_name().unwrap_or_default().to_owned();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = File::create(&tmp).map_err(io_err)?;
    f.write_all(&encode(backend)).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        // Persist the rename itself; not every platform lets a directory be opened.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}
