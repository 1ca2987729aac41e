//! Vocabulary types shared by the authentication service, the credential
//! repository and the gateway.
//!
//! The formal model uses one given set for passwords, salts and digests.
//! Here they are three distinct types so a cleartext password can never be
//! stored where a digest belongs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = u64;

/// Maximum length of a username, in characters.
pub const MAX_USER_ID_CHARS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("username must not be empty")]
    EmptyUserId,
    #[error("username longer than {MAX_USER_ID_CHARS} characters")]
    UserIdTooLong,
    #[error("username contains a control character")]
    UserIdControlChar,
    #[error("username is not valid UTF-8")]
    UserIdNotUtf8,
    #[error("secret must be at least one byte")]
    EmptySecret,
    #[error("name must not be empty")]
    EmptyName,
    #[error("unknown report {0:?}")]
    UnknownReport(String),
    #[error("unknown role {0:?}")]
    UnknownRole(String),
}

/// A registered (or candidate) username. Comparison is exact: no case folding.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(String);

impl UserId {
    pub fn new(value: impl Into<String>) -> Result<Self, DomainError> {
        let value = value.into();
        if value.is_empty() {
            return Err(DomainError::EmptyUserId);
        }
        if value.chars().count() > MAX_USER_ID_CHARS {
            return Err(DomainError::UserIdTooLong);
        }
        if value.chars().any(char::is_control) {
            return Err(DomainError::UserIdControlChar);
        }
        Ok(UserId(value))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DomainError> {
        let s = std::str::from_utf8(bytes).map_err(|_| DomainError::UserIdNotUtf8)?;
        Self::new(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UserId({:?})", self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for UserId {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UserId::new(s)
    }
}

impl Serialize for UserId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for UserId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        UserId::new(s).map_err(serde::de::Error::custom)
    }
}

/// Cleartext secret. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(Vec<u8>);

impl Secret {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, DomainError> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(DomainError::EmptySecret);
        }
        Ok(Secret(bytes))
    }

    pub fn expose(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

macro_rules! hex_bytes {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(Vec<u8>);

        impl $name {
            pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
                $name(bytes.into())
            }

            pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
                hex::decode(s).map($name)
            }

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            /// Lowercase hex, no separators.
            pub fn to_hex(&self) -> String {
                hex::encode(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes!(
    /// Per-user salt. Generated salts are 16 bytes; the fixture uses empty ones.
    Salt
);
hex_bytes!(
    /// Output of a password hash scheme.
    Digest
);

/// Outcome of every operation, as seen on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Report {
    Success,
    Failure,
}

impl Report {
    pub fn as_str(self) -> &'static str {
        match self {
            Report::Success => "Success",
            Report::Failure => "Failure",
        }
    }

    pub fn is_success(self) -> bool {
        self == Report::Success
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Report::Success
        } else {
            Report::Failure
        }
    }
}

/// Canonical textual rendering of a report.
pub fn render_report(r: Report) -> &'static str {
    r.as_str()
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Report {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Success" => Ok(Report::Success),
            "Failure" => Ok(Report::Failure),
            other => Err(DomainError::UnknownReport(other.to_owned())),
        }
    }
}

impl Serialize for Report {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Report {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    EndUser,
    Administrator,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::EndUser => "EndUser",
            Role::Administrator => "Administrator",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "EndUser" => Ok(Role::EndUser),
            "Administrator" => Ok(Role::Administrator),
            other => Err(DomainError::UnknownRole(other.to_owned())),
        }
    }
}

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Certificate serial number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SerialNb(pub u64);

impl fmt::Display for SerialNb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Public or private key bytes. The private half never appears in `Debug`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", content = "bytes", rename_all = "lowercase")]
pub enum KeyMaterial {
    Public(#[serde(with = "hex_vec")] Vec<u8>),
    Private(#[serde(with = "hex_vec")] Vec<u8>),
}

impl KeyMaterial {
    pub fn bytes(&self) -> &[u8] {
        match self {
            KeyMaterial::Public(b) | KeyMaterial::Private(b) => b,
        }
    }

    pub fn is_private(&self) -> bool {
        matches!(self, KeyMaterial::Private(_))
    }
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyMaterial::Public(b) => write!(f, "Public({})", hex::encode(b)),
            KeyMaterial::Private(_) => f.write_str("Private(<redacted>)"),
        }
    }
}

pub(crate) mod hex_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

macro_rules! text_newtype {
    ($(#[$meta:meta])* $name:ident, non_empty = $ne:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self, DomainError> {
                let value = value.into();
                if $ne && value.is_empty() {
                    return Err(DomainError::EmptyName);
                }
                Ok($name(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

text_newtype!(
    /// Project or resource name.
    Name,
    non_empty = true
);
text_newtype!(
    /// Distinguished name of a certificate subject.
    SubjectDN,
    non_empty = false
);
text_newtype!(
    /// Signature algorithm name.
    AlgName,
    non_empty = false
);
text_newtype!(
    /// Name of the issuing certificate authority.
    CAName,
    non_empty = false
);
