//! TCP front end: one thread and one [`SessionMachine`] per connection, a
//! single lock around the backend and audit log.
//!
//! For every completed request the gateway appends the audit record, then
//! persists the store if the backend changed, and only then replies.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use thiserror::Error;

use super::audit::{AuditError, AuditLog};
use super::store::{self, StoreError};
use super::wire::{WireMessage, ERR_MALFORMED, MAX_LINE};
use crate::domain::Timestamp;
use crate::hashing::HashScheme;
use crate::local_auth::{init_fixture, CredentialTable};
use crate::repository::CertificateRepository;
use crate::session::{Backend, ProtocolEvent, SessionMachine};

pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:7070";
pub const ERR_INTERNAL: &str = "internal";

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub listen: String,
    pub store_path: PathBuf,
    pub audit_path: PathBuf,
    /// Scheme for a newly created store. An existing store keeps its own.
    pub scheme: HashScheme,
    /// Overwrite the store with the four-user fixture at startup.
    pub init_fixture: bool,
    /// Fault injection: abort the process after the first mutation has been
    /// audited and persisted, before replying.
    pub kill_after_audit: bool,
    /// Fixed clock reading, for tests.
    pub clock: Option<Timestamp>,
}

impl GatewayConfig {
    pub fn new(store_path: impl Into<PathBuf>, audit_path: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            listen: DEFAULT_LISTEN_ADDR.to_owned(),
            store_path: store_path.into(),
            audit_path: audit_path.into(),
            scheme: HashScheme::strong(),
            init_fixture: false,
            kill_after_audit: false,
            clock: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("listen address {addr}: {source}")]
    Bind { addr: String, source: io::Error },
}

struct Inner {
    backend: Backend,
    audit: AuditLog,
}

struct Shared {
    inner: Mutex<Inner>,
    config: GatewayConfig,
}

/// A running gateway's state. Cheap to clone; clones share everything.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
}

fn wall_clock() -> Timestamp {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Outcome of reading one line with a length cap.
enum Line {
    Complete(Vec<u8>),
    TooLong,
}

fn read_line_capped<R: BufRead>(r: &mut R) -> io::Result<Option<Line>> {
    let mut buf = Vec::new();
    let mut overflow = false;
    loop {
        let chunk = match r.fill_buf() {
            Ok(c) => c,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if chunk.is_empty() {
            return Ok(match (buf.is_empty() && !overflow, overflow) {
                (true, _) => None,
                (false, true) => Some(Line::TooLong),
                (false, false) => Some(Line::Complete(buf)),
            });
        }
        let (take, done) = match chunk.iter().position(|b| *b == b'\n') {
            Some(i) => (i + 1, true),
            None => (chunk.len(), false),
        };
        if !overflow {
            buf.extend_from_slice(&chunk[..take]);
            // +2 leaves room for "\r\n".
            if buf.len() > MAX_LINE + 2 {
                overflow = true;
                buf.clear();
            }
        }
        r.consume(take);
        if done {
            return Ok(Some(if overflow { Line::TooLong } else { Line::Complete(buf) }));
        }
    }
}

/// Best-effort `seq` from a line that failed to decode.
fn salvage_seq(line: &[u8]) -> Option<u64> {
    serde_json::from_slice::<serde_json::Value>(line).ok()?.get("seq")?.as_u64()
}

impl Gateway {
    /// Loads (or creates) the store and opens the audit log. Refuses to
    /// start on a store that violates an invariant or a broken audit chain.
    pub fn open(config: GatewayConfig) -> Result<Self, GatewayError> {
        let backend = if config.init_fixture {
            let b = Backend::new(init_fixture(), CertificateRepository::new());
            store::persist(&b, &config.store_path)?;
            b
        } else if config.store_path.exists() {
            store::load(&config.store_path)?
        } else {
            let b = Backend::new(CredentialTable::new(config.scheme), CertificateRepository::new());
            store::persist(&b, &config.store_path)?;
            b
        };
        let audit = AuditLog::open(&config.audit_path)?;
        Ok(Gateway { shared: Arc::new(Shared { inner: Mutex::new(Inner { backend, audit }), config }) })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.shared.config
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // A panicking session thread cannot leave the backend half-updated:
        // every update is computed on a copy first.
        self.shared.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Current backend state.
    pub fn snapshot(&self) -> Backend {
        self.lock().backend.clone()
    }

    fn now(&self) -> Timestamp {
        self.shared.config.clock.unwrap_or_else(wall_clock)
    }

    pub fn bind(&self) -> Result<TcpListener, GatewayError> {
        let addr = &self.shared.config.listen;
        TcpListener::bind(addr).map_err(|source| GatewayError::Bind { addr: addr.clone(), source })
    }

    /// Accepts connections forever, one thread each.
    pub fn serve(&self, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let gw = self.clone();
            thread::spawn(move || {
                let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "?".into());
                info!("connection from {peer}");
                if let Err(e) = gw.handle_stream(stream) {
                    info!("connection from {peer} ended: {e}");
                }
            });
        }
        Ok(())
    }

    fn handle_stream(&self, stream: TcpStream) -> io::Result<()> {
        let reader = BufReader::new(stream.try_clone()?);
        self.handle_connection(reader, BufWriter::new(stream))
    }

    /// Runs one session over any line-oriented byte stream until EOF.
    pub fn handle_connection<R: BufRead, W: Write>(&self, mut reader: R, mut writer: W) -> io::Result<()> {
        let mut machine = SessionMachine::new();
        while let Some(line) = read_line_capped(&mut reader)? {
            let reply = match line {
                Line::TooLong => WireMessage::error(ERR_MALFORMED, None),
                Line::Complete(bytes) => match WireMessage::decode(&bytes).and_then(|m| Ok((m.to_event()?, m.seq))) {
                    Err(_) => WireMessage::error(ERR_MALFORMED, salvage_seq(&bytes)),
                    Ok((event, seq)) => self.process(&mut machine, &event, seq),
                },
            };
            writer.write_all(reply.encode().as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(())
    }

    fn process(&self, machine: &mut SessionMachine, event: &ProtocolEvent, seq: Option<u64>) -> WireMessage {
        let mut inner = self.lock();
        let now = self.now();
        let mut backend = inner.backend.clone();
        let mut next = machine.clone();
        let step = next.step(event, &mut backend, now);

        if let Some(note) = &step.audit {
            let user = note.user.as_ref().map_or("-", |u| u.as_str());
            if let Err(e) = inner.audit.append(now, user, note.op.name(), note.report, &note.detail) {
                warn!("{e}");
                return WireMessage::error(ERR_INTERNAL, seq);
            }
            if note.mutated {
                if let Err(e) = store::persist(&backend, &self.shared.config.store_path) {
                    warn!("{e}");
                    return WireMessage::error(ERR_INTERNAL, seq);
                }
                if self.shared.config.kill_after_audit {
                    warn!("fault injection: aborting after audit and persist");
                    std::process::abort();
                }
            }
        }
        inner.backend = backend;
        *machine = next;
        WireMessage::reply(event, step.output.as_ref(), seq)
    }
}
