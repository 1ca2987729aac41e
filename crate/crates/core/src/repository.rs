//! Certificate and proxy credential repository.
//!
//! Holds long-lived project certificates with their private keys, and the
//! short-lived proxy certificates issued from them, each attributed to the
//! user who requested it.
//!
//! Certificates are compact signed records, not X.509 DER: the
//! to-be-signed fields have a canonical length-prefixed byte encoding, and
//! the signature is Ed25519 over that encoding.

use std::collections::{BTreeMap, BTreeSet};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{hex_vec, AlgName, CAName, KeyMaterial, Name, Report, SerialNb, SubjectDN, Timestamp, UserId};

/// Longest lifetime a proxy may be issued for.
pub const MAX_PROXY_LIFETIME: u64 = 86_400;

pub const SIG_ALG: &str = "ed25519";

const KEY_PAIR_CHALLENGE: &[u8] = b"acd/key-pair-check/v1";

/// Generates a fresh Ed25519 key pair as `(public, private)`.
pub fn generate_key_pair() -> (KeyMaterial, KeyMaterial) {
    let signing = SigningKey::generate(&mut OsRng);
    (
        KeyMaterial::Public(signing.verifying_key().to_bytes().to_vec()),
        KeyMaterial::Private(signing.to_bytes().to_vec()),
    )
}

fn signing_key(private: &KeyMaterial) -> Option<SigningKey> {
    match private {
        KeyMaterial::Private(bytes) => {
            let seed: [u8; 32] = bytes.as_slice().try_into().ok()?;
            Some(SigningKey::from_bytes(&seed))
        }
        KeyMaterial::Public(_) => None,
    }
}

fn verifying_key(public: &KeyMaterial) -> Option<VerifyingKey> {
    match public {
        KeyMaterial::Public(bytes) => {
            let raw: [u8; 32] = bytes.as_slice().try_into().ok()?;
            VerifyingKey::from_bytes(&raw).ok()
        }
        KeyMaterial::Private(_) => None,
    }
}

/// True iff `private` signs a fixed challenge that `public` verifies.
/// Malformed or mis-roled key material is simply not a valid pair.
pub fn valid_pki_key_pair(public: &KeyMaterial, private: &KeyMaterial) -> bool {
    let (Some(vk), Some(sk)) = (verifying_key(public), signing_key(private)) else {
        return false;
    };
    let sig = sk.sign(KEY_PAIR_CHALLENGE);
    vk.verify_strict(KEY_PAIR_CHALLENGE, &sig).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertDecodeError {
    #[error("certificate encoding truncated")]
    Truncated,
    #[error("certificate encoding has trailing bytes")]
    Trailing,
    #[error("certificate field is not UTF-8")]
    NotUtf8,
    #[error("certificate field invalid: {0}")]
    Invalid(&'static str),
    #[error("certificate is not hex")]
    NotHex,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Certificate {
    pub serial: SerialNb,
    pub subject: SubjectDN,
    pub issuer: CAName,
    #[serde(with = "hex_vec")]
    pub public_key: Vec<u8>,
    pub sig_alg: AlgName,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub is_proxy: bool,
    #[serde(with = "hex_vec")]
    pub signature: Vec<u8>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(&(b.len() as u32).to_be_bytes());
        self.0.extend_from_slice(b);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CertDecodeError> {
        if self.0.len() < n {
            return Err(CertDecodeError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u64(&mut self) -> Result<u64, CertDecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bytes(&mut self) -> Result<&'a [u8], CertDecodeError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        self.take(len)
    }
    fn text(&mut self) -> Result<String, CertDecodeError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| CertDecodeError::NotUtf8)
    }
}

impl Certificate {
    /// Canonical encoding of every field except the signature.
    pub fn tbs_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.u64(self.serial.0);
        w.bytes(self.subject.as_str().as_bytes());
        w.bytes(self.issuer.as_str().as_bytes());
        w.bytes(&self.public_key);
        w.bytes(self.sig_alg.as_str().as_bytes());
        w.u64(self.not_before);
        w.u64(self.not_after);
        w.0.push(u8::from(self.is_proxy));
        w.0
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.tbs_bytes();
        let mut w = Writer(Vec::new());
        w.bytes(&self.signature);
        out.extend_from_slice(&w.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertDecodeError> {
        let mut r = Reader(bytes);
        let serial = SerialNb(r.u64()?);
        let subject = SubjectDN::new(r.text()?).map_err(|_| CertDecodeError::Invalid("subject"))?;
        let issuer = CAName::new(r.text()?).map_err(|_| CertDecodeError::Invalid("issuer"))?;
        let public_key = r.bytes()?.to_vec();
        let sig_alg = AlgName::new(r.text()?).map_err(|_| CertDecodeError::Invalid("sig_alg"))?;
        let not_before = r.u64()?;
        let not_after = r.u64()?;
        let is_proxy = match r.take(1)?[0] {
            0 => false,
            1 => true,
            _ => return Err(CertDecodeError::Invalid("is_proxy")),
        };
        let signature = r.bytes()?.to_vec();
        if !r.0.is_empty() {
            return Err(CertDecodeError::Trailing);
        }
        if not_before >= not_after {
            return Err(CertDecodeError::Invalid("validity"));
        }
        Ok(Certificate { serial, subject, issuer, public_key, sig_alg, not_before, not_after, is_proxy, signature })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<Self, CertDecodeError> {
        Certificate::decode(&hex::decode(s).map_err(|_| CertDecodeError::NotHex)?)
    }

    pub fn public_key(&self) -> KeyMaterial {
        KeyMaterial::Public(self.public_key.clone())
    }

    fn sign_with(mut self, key: &KeyMaterial) -> Option<Self> {
        let sk = signing_key(key)?;
        self.signature = sk.sign(&self.tbs_bytes()).to_bytes().to_vec();
        Some(self)
    }

    /// A self-signed, non-proxy certificate. Stands in for one enrolled with
    /// a real authority.
    pub fn self_signed(
        serial: SerialNb,
        subject: SubjectDN,
        not_before: Timestamp,
        not_after: Timestamp,
        public: &KeyMaterial,
        private: &KeyMaterial,
    ) -> Option<Self> {
        if not_before >= not_after {
            return None;
        }
        Certificate {
            serial,
            issuer: CAName::new(subject.as_str()).expect("CAName accepts any text"),
            subject,
            public_key: public.bytes().to_vec(),
            sig_alg: AlgName::new(SIG_ALG).expect("static"),
            not_before,
            not_after,
            is_proxy: false,
            signature: Vec::new(),
        }
        .sign_with(private)
    }

    /// Does `signer` verify this certificate's signature?
    pub fn verify_signature(&self, signer: &KeyMaterial) -> bool {
        let (Some(vk), Ok(sig)) = (verifying_key(signer), Signature::from_slice(&self.signature)) else {
            return false;
        };
        vk.verify(&self.tbs_bytes(), &sig).is_ok()
    }

    pub fn is_valid_at(&self, now: Timestamp) -> bool {
        self.not_before <= now && now < self.not_after
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NameKind {
    Project,
    Resource,
}

/// Result of a successful proxy issuance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyHandle {
    pub serial: SerialNb,
    pub certificate: Certificate,
    pub private_key: KeyMaterial,
}

/// One active proxy, as listed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyInfo {
    pub serial: SerialNb,
    pub issuer: SerialNb,
    pub user: UserId,
    pub not_after: Timestamp,
}

/// Reason a repository operation reported Failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RepoFailure {
    #[error("certificate already held")]
    AlreadyPresent,
    #[error("serial already used by a different certificate")]
    SerialInUse,
    #[error("private key does not match the certificate's public key")]
    KeyMismatch,
    #[error("certificate is a proxy certificate")]
    IsProxy,
    #[error("certificate not held")]
    NotPresent,
    #[error("no certificate mapped to project")]
    UnknownProject,
    #[error("issuing certificate not valid now")]
    IssuerExpired,
    #[error("lifetime must be positive")]
    BadLifetime,
    #[error("no such proxy")]
    UnknownProxy,
}

pub type RepoResult<T> = Result<T, RepoFailure>;

pub fn to_report<T>(r: &RepoResult<T>) -> Report {
    Report::from_bool(r.is_ok())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepoInvariant {
    #[error("certificate-key: certificate {0} has no private key")]
    CertificateKey(SerialNb),
    #[error("cert-association-range: project {0} maps to serial {1} with no private key")]
    CertAssociationRange(Name, SerialNb),
    #[error("cert-association-dangling: project {0} maps to serial {1} which is not a held certificate")]
    CertAssociationDangling(Name, SerialNb),
    #[error("cert-association-domain: {0} is not a registered project or resource name")]
    CertAssociationDomain(Name),
    #[error("proxy-key: proxy {0} has no secret key")]
    ProxyKey(SerialNb),
    #[error("proxy-domains: proxy secret key, issuer, issued-proxies and user maps have different domains")]
    ProxyDomains,
    #[error("proxy-issuer-held: proxy {0} was issued by {1}, which is not a held certificate")]
    ProxyIssuerHeld(SerialNb, SerialNb),
    #[error("certificate-kind: certificate {0} is in the wrong set for its proxy flag")]
    CertificateKind(SerialNb),
    #[error("serial-unique: serial {0} used twice")]
    SerialUnique(SerialNb),
    #[error("validity: certificate {0} has notBefore >= notAfter")]
    Validity(SerialNb),
    #[error("key-role: key stored for {0} is not a private key")]
    KeyRole(SerialNb),
}

impl RepoInvariant {
    pub fn name(&self) -> &'static str {
        match self {
            RepoInvariant::CertificateKey(_) => "certificate-key",
            RepoInvariant::CertAssociationRange(..) => "cert-association-range",
            RepoInvariant::CertAssociationDangling(..) => "cert-association-dangling",
            RepoInvariant::CertAssociationDomain(_) => "cert-association-domain",
            RepoInvariant::ProxyKey(_) => "proxy-key",
            RepoInvariant::ProxyDomains => "proxy-domains",
            RepoInvariant::ProxyIssuerHeld(..) => "proxy-issuer-held",
            RepoInvariant::CertificateKind(_) => "certificate-kind",
            RepoInvariant::SerialUnique(_) => "serial-unique",
            RepoInvariant::Validity(_) => "validity",
            RepoInvariant::KeyRole(_) => "key-role",
        }
    }
}

/// Every map of the repository state, keyed canonically.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateRepository {
    certificates: BTreeMap<SerialNb, Certificate>,
    proxy_certificates: BTreeMap<SerialNb, Certificate>,
    names: BTreeMap<Name, NameKind>,
    key_association: BTreeMap<SerialNb, KeyMaterial>,
    cert_association: BTreeMap<Name, SerialNb>,
    issued_proxies: BTreeMap<SerialNb, SerialNb>,
    proxy_issuer: BTreeMap<SerialNb, SerialNb>,
    proxy_secret_key: BTreeMap<SerialNb, KeyMaterial>,
    user_proxy: BTreeMap<SerialNb, UserId>,
    next_serial: u64,
}

impl CertificateRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn certificates(&self) -> impl Iterator<Item = &Certificate> {
        self.certificates.values()
    }

    pub fn proxy_certificates(&self) -> impl Iterator<Item = &Certificate> {
        self.proxy_certificates.values()
    }

    pub fn certificate(&self, serial: SerialNb) -> Option<&Certificate> {
        self.certificates.get(&serial)
    }

    pub fn proxy_certificate(&self, serial: SerialNb) -> Option<&Certificate> {
        self.proxy_certificates.get(&serial)
    }

    pub fn projects_names(&self) -> BTreeSet<&Name> {
        self.names.iter().filter(|(_, k)| **k == NameKind::Project).map(|(n, _)| n).collect()
    }

    pub fn resources_names(&self) -> BTreeSet<&Name> {
        self.names.iter().filter(|(_, k)| **k == NameKind::Resource).map(|(n, _)| n).collect()
    }

    pub fn certificate_for(&self, project: &Name) -> Option<SerialNb> {
        self.cert_association.get(project).copied()
    }

    pub fn key_association(&self) -> &BTreeMap<SerialNb, KeyMaterial> {
        &self.key_association
    }

    pub fn cert_association(&self) -> &BTreeMap<Name, SerialNb> {
        &self.cert_association
    }

    pub fn issued_proxies(&self) -> &BTreeMap<SerialNb, SerialNb> {
        &self.issued_proxies
    }

    pub fn proxy_issuer(&self) -> &BTreeMap<SerialNb, SerialNb> {
        &self.proxy_issuer
    }

    pub fn proxy_secret_key(&self) -> &BTreeMap<SerialNb, KeyMaterial> {
        &self.proxy_secret_key
    }

    pub fn user_proxy(&self) -> &BTreeMap<SerialNb, UserId> {
        &self.user_proxy
    }

    /// Next serial the allocator will try for a proxy.
    pub fn next_serial(&self) -> u64 {
        self.next_serial
    }

    pub fn proxies(&self) -> Vec<ProxyInfo> {
        self.proxy_certificates
            .values()
            .map(|c| ProxyInfo {
                serial: c.serial,
                issuer: self.proxy_issuer[&c.serial],
                user: self.user_proxy[&c.serial].clone(),
                not_after: c.not_after,
            })
            .collect()
    }

    fn serial_in_use(&self, serial: SerialNb) -> bool {
        self.certificates.contains_key(&serial) || self.proxy_certificates.contains_key(&serial)
    }

    fn allocate_serial(&mut self) -> SerialNb {
        while self.serial_in_use(SerialNb(self.next_serial)) {
            self.next_serial += 1;
        }
        let serial = SerialNb(self.next_serial);
        self.next_serial += 1;
        serial
    }

    pub fn add_certificate(&mut self, cert: &Certificate, secret_key: &KeyMaterial, project: &Name) -> RepoResult<()> {
        self.add_certificate_as(cert, secret_key, project, NameKind::Project)
    }

    /// Adds a certificate and maps `name` to it, registering `name` under
    /// `kind` if it is new. An existing mapping for `name` is overridden.
    pub fn add_certificate_as(
        &mut self,
        cert: &Certificate,
        secret_key: &KeyMaterial,
        name: &Name,
        kind: NameKind,
    ) -> RepoResult<()> {
        if cert.is_proxy {
            return Err(RepoFailure::IsProxy);
        }
        if self.certificates.get(&cert.serial) == Some(cert) {
            return Err(RepoFailure::AlreadyPresent);
        }
        if self.serial_in_use(cert.serial) {
            return Err(RepoFailure::SerialInUse);
        }
        if !valid_pki_key_pair(&cert.public_key(), secret_key) {
            return Err(RepoFailure::KeyMismatch);
        }
        self.certificates.insert(cert.serial, cert.clone());
        self.key_association.insert(cert.serial, secret_key.clone());
        self.cert_association.insert(name.clone(), cert.serial);
        self.names.entry(name.clone()).or_insert(kind);
        Ok(())
    }

    /// Removes a held certificate, its key, every name mapped to it, and
    /// every live proxy it issued.
    pub fn remove_certificate(&mut self, cert: &Certificate) -> RepoResult<()> {
        if self.certificates.get(&cert.serial) != Some(cert) {
            return Err(RepoFailure::NotPresent);
        }
        let serial = cert.serial;
        self.certificates.remove(&serial);
        self.key_association.remove(&serial);
        let unmapped: Vec<Name> =
            self.cert_association.iter().filter(|(_, s)| **s == serial).map(|(n, _)| n.clone()).collect();
        for name in unmapped {
            self.cert_association.remove(&name);
            self.names.remove(&name);
        }
        let orphans: Vec<SerialNb> =
            self.proxy_issuer.iter().filter(|(_, issuer)| **issuer == serial).map(|(p, _)| *p).collect();
        for proxy in orphans {
            self.drop_proxy(proxy);
        }
        Ok(())
    }

    pub fn remove_certificate_by_serial(&mut self, serial: SerialNb) -> RepoResult<()> {
        let cert = self.certificates.get(&serial).cloned().ok_or(RepoFailure::NotPresent)?;
        self.remove_certificate(&cert)
    }

    /// Issues a proxy for `user` signed by the certificate mapped to
    /// `project`. Lifetime is capped at [`MAX_PROXY_LIFETIME`].
    pub fn create_proxy(
        &mut self,
        user: &UserId,
        project: &Name,
        lifetime_seconds: u64,
        now: Timestamp,
    ) -> RepoResult<ProxyHandle> {
        if lifetime_seconds == 0 {
            return Err(RepoFailure::BadLifetime);
        }
        let issuer_serial = self.cert_association.get(project).copied().ok_or(RepoFailure::UnknownProject)?;
        let issuer = &self.certificates[&issuer_serial];
        if !issuer.is_valid_at(now) {
            return Err(RepoFailure::IssuerExpired);
        }
        let issuer_key = self.key_association[&issuer_serial].clone();
        let subject = SubjectDN::new(format!("{}/CN=proxy", issuer.subject)).expect("any text");
        let issuer_name = CAName::new(issuer.subject.as_str()).expect("any text");

        let (public, private) = generate_key_pair();
        let serial = self.allocate_serial();
        let certificate = Certificate {
            serial,
            subject,
            issuer: issuer_name,
            public_key: public.bytes().to_vec(),
            sig_alg: AlgName::new(SIG_ALG).expect("static"),
            not_before: now,
            not_after: now.saturating_add(lifetime_seconds.min(MAX_PROXY_LIFETIME)),
            is_proxy: true,
            signature: Vec::new(),
        }
        .sign_with(&issuer_key)
        .expect("held keys passed the key-pair check");

        self.proxy_certificates.insert(serial, certificate.clone());
        self.issued_proxies.insert(serial, issuer_serial);
        self.proxy_issuer.insert(serial, issuer_serial);
        self.proxy_secret_key.insert(serial, private.clone());
        self.user_proxy.insert(serial, user.clone());
        Ok(ProxyHandle { serial, certificate, private_key: private })
    }

    pub fn revoke_proxy(&mut self, serial: SerialNb) -> RepoResult<()> {
        if !self.proxy_certificates.contains_key(&serial) {
            return Err(RepoFailure::UnknownProxy);
        }
        self.drop_proxy(serial);
        Ok(())
    }

    fn drop_proxy(&mut self, serial: SerialNb) {
        self.proxy_certificates.remove(&serial);
        self.issued_proxies.remove(&serial);
        self.proxy_issuer.remove(&serial);
        self.proxy_secret_key.remove(&serial);
        self.user_proxy.remove(&serial);
    }

    /// Checks every state invariant, returning the first violated one.
    pub fn check_invariants(&self) -> Result<(), RepoInvariant> {
        for (serial, c) in &self.certificates {
            if c.serial != *serial || c.is_proxy {
                return Err(RepoInvariant::CertificateKind(*serial));
            }
            if c.not_before >= c.not_after {
                return Err(RepoInvariant::Validity(*serial));
            }
            if !self.key_association.contains_key(serial) {
                return Err(RepoInvariant::CertificateKey(*serial));
            }
        }
        for (serial, key) in self.key_association.iter().chain(&self.proxy_secret_key) {
            if !key.is_private() {
                return Err(RepoInvariant::KeyRole(*serial));
            }
        }
        for (name, serial) in &self.cert_association {
            if !self.key_association.contains_key(serial) {
                return Err(RepoInvariant::CertAssociationRange(name.clone(), *serial));
            }
            if !self.certificates.contains_key(serial) {
                return Err(RepoInvariant::CertAssociationDangling(name.clone(), *serial));
            }
            if !self.names.contains_key(name) {
                return Err(RepoInvariant::CertAssociationDomain(name.clone()));
            }
        }
        for (serial, p) in &self.proxy_certificates {
            if p.serial != *serial || !p.is_proxy {
                return Err(RepoInvariant::CertificateKind(*serial));
            }
            if self.certificates.contains_key(serial) {
                return Err(RepoInvariant::SerialUnique(*serial));
            }
            if p.not_before >= p.not_after {
                return Err(RepoInvariant::Validity(*serial));
            }
            if !self.proxy_secret_key.contains_key(serial) {
                return Err(RepoInvariant::ProxyKey(*serial));
            }
        }
        let keys = self.proxy_secret_key.keys();
        if !keys.clone().eq(self.proxy_issuer.keys())
            || !keys.clone().eq(self.user_proxy.keys())
            || !keys.clone().eq(self.issued_proxies.keys())
            || !keys.eq(self.proxy_certificates.keys())
        {
            return Err(RepoInvariant::ProxyDomains);
        }
        for (proxy, issuer) in &self.proxy_issuer {
            if !self.certificates.contains_key(issuer) || self.issued_proxies.get(proxy) != Some(issuer) {
                return Err(RepoInvariant::ProxyIssuerHeld(*proxy, *issuer));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOW: Timestamp = 1_700_000_000;

    fn name(s: &str) -> Name {
        Name::new(s).unwrap()
    }

    fn cert(serial: u64) -> (Certificate, KeyMaterial) {
        let (public, private) = generate_key_pair();
        let c = Certificate::self_signed(
            SerialNb(serial),
            SubjectDN::new(format!("/O=Grid/OU=VO/CN=project-{serial}")).unwrap(),
            NOW - 10,
            NOW + 365 * 86_400,
            &public,
            &private,
        )
        .unwrap();
        (c, private)
    }

    fn ali() -> UserId {
        UserId::new("ali").unwrap()
    }

    #[test]
    fn key_pair_check() {
        let (p1, s1) = generate_key_pair();
        let (p2, s2) = generate_key_pair();
        assert!(valid_pki_key_pair(&p1, &s1));
        assert!(!valid_pki_key_pair(&p1, &s2));
        assert!(!valid_pki_key_pair(&p2, &s1));
        assert!(!valid_pki_key_pair(&s1, &p1), "roles swapped");
        assert!(!valid_pki_key_pair(&KeyMaterial::Public(vec![1, 2, 3]), &s1));
        assert!(!valid_pki_key_pair(&p1, &KeyMaterial::Private(vec![])));
    }

    #[test]
    fn key_pair_check_rejects_every_bit_flip() {
        let (p, s) = generate_key_pair();
        for pos in (0..256).step_by(256 / 100).take(100) {
            let mut bytes = s.bytes().to_vec();
            bytes[pos / 8] ^= 1 << (pos % 8);
            assert!(!valid_pki_key_pair(&p, &KeyMaterial::Private(bytes)), "bit {pos}");
        }
    }

    #[test]
    fn certificate_encoding_round_trips() {
        let (c, private) = cert(7);
        assert_eq!(Certificate::from_hex(&c.to_hex()).unwrap(), c);
        assert!(c.verify_signature(&c.public_key()));
        let mut tampered = c.clone();
        tampered.not_after += 1;
        assert!(!tampered.verify_signature(&c.public_key()));
        let mut enc = c.encode();
        enc.push(0);
        assert_eq!(Certificate::decode(&enc), Err(CertDecodeError::Trailing));
        assert_eq!(Certificate::decode(&c.encode()[..10]), Err(CertDecodeError::Truncated));
        assert!(valid_pki_key_pair(&c.public_key(), &private));
    }

    #[test]
    fn add_certificate_cases() {
        let mut r = CertificateRepository::new();
        let (a, ka) = cert(1);
        r.add_certificate(&a, &ka, &name("virolab")).unwrap();
        assert_eq!(r.certificate_for(&name("virolab")), Some(a.serial));
        assert!(r.projects_names().contains(&name("virolab")));
        assert_eq!(r.add_certificate(&a, &ka, &name("virolab")), Err(RepoFailure::AlreadyPresent));

        let (_, kb) = cert(2);
        let (c, _) = cert(3);
        let before = r.clone();
        assert_eq!(r.add_certificate(&c, &kb, &name("p")), Err(RepoFailure::KeyMismatch));
        assert_eq!(r, before);

        let (dup, kdup) = cert(1);
        assert_eq!(r.add_certificate(&dup, &kdup, &name("q")), Err(RepoFailure::SerialInUse));
        r.check_invariants().unwrap();
    }

    #[test]
    fn remove_certificate_cases() {
        let empty = CertificateRepository::new();
        let (a, ka) = cert(1);
        let mut r = empty.clone();
        r.add_certificate(&a, &ka, &name("p")).unwrap();
        r.remove_certificate(&a).unwrap();
        assert_eq!(r, empty);
        assert_eq!(r.remove_certificate(&a), Err(RepoFailure::NotPresent));

        let (b, kb) = cert(2);
        r.add_certificate(&a, &ka, &name("p")).unwrap();
        r.add_certificate(&b, &kb, &name("q")).unwrap();
        r.remove_certificate(&a).unwrap();
        assert_eq!(r.certificate_for(&name("q")), Some(b.serial));
        assert_eq!(r.certificate_for(&name("p")), None);
        r.check_invariants().unwrap();
    }

    #[test]
    fn remove_certificate_cascades_to_proxies() {
        let mut r = CertificateRepository::new();
        let (a, ka) = cert(1);
        let (b, kb) = cert(2);
        r.add_certificate(&a, &ka, &name("p")).unwrap();
        r.add_certificate(&b, &kb, &name("q")).unwrap();
        let pa = r.create_proxy(&ali(), &name("p"), 3600, NOW).unwrap();
        let pb = r.create_proxy(&ali(), &name("q"), 3600, NOW).unwrap();
        r.remove_certificate(&a).unwrap();
        assert!(r.proxy_certificate(pa.serial).is_none());
        assert!(r.proxy_certificate(pb.serial).is_some());
        r.check_invariants().unwrap();
    }

    #[test]
    fn create_proxy_cases() {
        let mut r = CertificateRepository::new();
        let (a, ka) = cert(1);
        r.add_certificate(&a, &ka, &name("p")).unwrap();

        let h = r.create_proxy(&ali(), &name("p"), 3600, NOW).unwrap();
        assert_eq!(r.user_proxy()[&h.serial], ali());
        assert_eq!(r.proxy_issuer()[&h.serial], a.serial);
        assert!(h.certificate.is_proxy);
        assert_eq!(h.certificate.subject.as_str(), "/O=Grid/OU=VO/CN=project-1/CN=proxy");
        assert_eq!(h.certificate.not_after, NOW + 3600);
        assert!(h.certificate.verify_signature(&a.public_key()));
        assert!(valid_pki_key_pair(&h.certificate.public_key(), &h.private_key));

        let h2 = r.create_proxy(&ali(), &name("p"), 10 * 86_400, NOW).unwrap();
        assert_ne!(h.serial, h2.serial);
        assert_ne!(h2.serial, a.serial);
        assert_eq!(h2.certificate.not_after, NOW + MAX_PROXY_LIFETIME);
        r.check_invariants().unwrap();
        assert_eq!(r.proxies().len(), 2);

        let before = r.clone();
        assert_eq!(r.create_proxy(&ali(), &name("unknown"), 3600, NOW), Err(RepoFailure::UnknownProject));
        assert_eq!(r.create_proxy(&ali(), &name("p"), 0, NOW), Err(RepoFailure::BadLifetime));
        assert_eq!(r.create_proxy(&ali(), &name("p"), 60, NOW + 400 * 86_400), Err(RepoFailure::IssuerExpired));
        assert_eq!(r, before);
    }

    #[test]
    fn revoke_proxy_cases() {
        let mut r = CertificateRepository::new();
        let (a, ka) = cert(1);
        r.add_certificate(&a, &ka, &name("p")).unwrap();
        let h = r.create_proxy(&ali(), &name("p"), 3600, NOW).unwrap();
        r.revoke_proxy(h.serial).unwrap();
        assert!(r.user_proxy().is_empty() && r.proxy_issuer().is_empty());
        assert!(r.proxy_secret_key().is_empty() && r.issued_proxies().is_empty());
        assert_eq!(r.revoke_proxy(h.serial), Err(RepoFailure::UnknownProxy));
        assert_eq!(r.revoke_proxy(SerialNb(999)), Err(RepoFailure::UnknownProxy));
    }

    #[test]
    fn invariant_check_names_violation() {
        let mut r = CertificateRepository::new();
        let (a, ka) = cert(1);
        r.add_certificate(&a, &ka, &name("p")).unwrap();
        r.key_association.clear();
        assert_eq!(r.check_invariants().unwrap_err().name(), "certificate-key");
    }
}
