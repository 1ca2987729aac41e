//! Audited credential delegation.
//!
//! Users authenticate to a gateway with a username and password; the
//! gateway holds the project certificates, issues short-lived proxies on
//! their behalf and records who did what in a hash-chained audit log.
//!
//! - [`domain`]: identifiers, secrets, digests, reports, roles.
//! - [`hashing`]: salted password hashing (MD5 for the legacy fixture,
//!   Argon2id otherwise).
//! - [`local_auth`]: the credential table and its operations.
//! - [`repository`]: certificates, keys, names and proxies.
//! - [`session`]: the per-connection protocol state machine.
//! - [`harness`]: a CSP trace interpreter and the reference process model.
//! - [`gateway`]: wire format, store, audit log and TCP server.
//! - [`cli`]: the command-line client and wallet.

pub mod cli;
pub mod domain;
pub mod gateway;
pub mod harness;
pub mod hashing;
pub mod local_auth;
pub mod repository;
pub mod session;
