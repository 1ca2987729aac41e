//! The network-facing gateway: wire format, persistent store, audit log
//! and the TCP server tying them to the session machine.

pub mod audit;
pub mod server;
pub mod store;
pub mod wire;

pub use audit::{verify_audit_chain, AuditLog, AuditRecord, ChainStatus};
pub use server::{Gateway, GatewayConfig, GatewayError, DEFAULT_LISTEN_ADDR};
pub use wire::WireMessage;
