//! Salted password hashing.
//!
//! `encrypt(scheme, salt, secret)` is the one-way function applied to
//! `salt ‖ password` before it is stored or compared. Two schemes exist:
//!
//! * `md5-compat`: MD5 over `salt ‖ secret`. Only used to reproduce the
//!   four-user fixture, whose digests are unsalted MD5.
//! * `strong-kdf`: Argon2id. The salt is folded through SHA-256 so that any
//!   stored salt length (including zero) is accepted.

use std::fmt;

use argon2::{Algorithm, Argon2, Params, Version};
use md5::Md5;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::domain::{Digest, Salt, Secret};

/// Length of every salt produced by [`generate_salt`].
pub const SALT_LEN: usize = 16;

const KDF_SALT_DOMAIN: &[u8] = b"acd/strong-kdf/salt/v1";

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfCost {
    pub memory_kib: u32,
    pub iterations: u32,
}

impl KdfCost {
    /// 19 MiB, two passes.
    pub const DEFAULT: KdfCost = KdfCost { memory_kib: 19_456, iterations: 2 };
    /// Cheap profile for bulk tests and examples. Not for deployment.
    pub const LIGHT: KdfCost = KdfCost { memory_kib: 256, iterations: 1 };

    fn params(self) -> Params {
        // Params::new only fails for out-of-range values; clamp into range.
        let memory = self.memory_kib.max(Params::MIN_M_COST);
        let iterations = self.iterations.max(Params::MIN_T_COST);
        Params::new(memory, iterations, 1, Some(32)).expect("clamped argon2 params are valid")
    }
}

impl Default for KdfCost {
    fn default() -> Self {
        KdfCost::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum HashScheme {
    #[serde(rename = "md5-compat")]
    Md5Compat,
    #[serde(rename = "strong-kdf")]
    StrongKdf(KdfCost),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown hash scheme {0:?} (expected md5-compat or strong-kdf)")]
pub struct UnknownScheme(pub String);

impl HashScheme {
    pub fn strong() -> Self {
        HashScheme::StrongKdf(KdfCost::DEFAULT)
    }

    pub fn name(&self) -> &'static str {
        match self {
            HashScheme::Md5Compat => "md5-compat",
            HashScheme::StrongKdf(_) => "strong-kdf",
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            HashScheme::Md5Compat => 16,
            HashScheme::StrongKdf(_) => 32,
        }
    }

    /// Parses a scheme name; `strong-kdf` gets the default cost.
    pub fn from_name(name: &str) -> Result<Self, UnknownScheme> {
        match name {
            "md5-compat" => Ok(HashScheme::Md5Compat),
            "strong-kdf" => Ok(HashScheme::strong()),
            other => Err(UnknownScheme(other.to_owned())),
        }
    }
}

impl Default for HashScheme {
    fn default() -> Self {
        HashScheme::strong()
    }
}

impl fmt::Display for HashScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hashes `salt ‖ secret` under `scheme`. Total and deterministic.
pub fn encrypt(scheme: HashScheme, salt: &Salt, secret: &Secret) -> Digest {
    match scheme {
        HashScheme::Md5Compat => {
            let mut h = Md5::new();
            h.update(salt.as_bytes());
            h.update(secret.expose());
            Digest::from_bytes(h.finalize().to_vec())
        }
        HashScheme::StrongKdf(cost) => {
            let mut folded = Sha256::new();
            folded.update(KDF_SALT_DOMAIN);
            folded.update(salt.as_bytes());
            let kdf_salt = folded.finalize();
            let mut out = [0u8; 32];
            Argon2::new(Algorithm::Argon2id, Version::V0x13, cost.params())
                .hash_password_into(secret.expose(), &kdf_salt, &mut out)
                .expect("argon2 accepts a 32-byte salt and any password length");
            Digest::from_bytes(out.to_vec())
        }
    }
}

#[derive(Debug, Error)]
#[error("no entropy source available: {0}")]
pub struct EntropyUnavailable(#[from] rand::Error);

pub fn try_generate_salt() -> Result<Salt, EntropyUnavailable> {
    let mut buf = [0u8; SALT_LEN];
    OsRng.try_fill_bytes(&mut buf)?;
    Ok(Salt::from_bytes(buf.to_vec()))
}

/// Fresh 16-byte salt from the operating system RNG.
///
/// A missing entropy source is a broken deployment, so this panics.
pub fn generate_salt() -> Salt {
    try_generate_salt().unwrap_or_else(|e| panic!("fatal configuration error: {e}"))
}
