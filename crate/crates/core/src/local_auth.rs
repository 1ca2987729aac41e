//! Local password authentication: the credential table and its six
//! operations.
//!
//! Every operation is total. A failed precondition produces
//! [`Report::Failure`] and leaves the table untouched; the finer-grained
//! [`Detail`] is for logs and tests and never goes on the wire.

use std::collections::{BTreeMap, BTreeSet};

use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::domain::{Digest, Report, Role, Salt, Secret, UserId};
use crate::hashing::{encrypt, generate_salt, HashScheme};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub digest: Digest,
    pub salt: Salt,
    pub role: Role,
}

/// Why an operation failed. Internal only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detail {
    Ok,
    InvalidCredential,
    UserIdNotInUse,
    UserIdInUse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthOutcome {
    pub report: Report,
    pub detail: Detail,
}

impl AuthOutcome {
    const OK: AuthOutcome = AuthOutcome { report: Report::Success, detail: Detail::Ok };

    fn fail(detail: Detail) -> Self {
        AuthOutcome { report: Report::Failure, detail }
    }

    pub fn is_success(&self) -> bool {
        self.report.is_success()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantViolation {
    #[error("registered-users: registered users differ from the password table's domain")]
    RegisteredUsers,
    #[error("salting-domain: password table and salt table have different domains")]
    SaltingDomain,
    #[error("role-domain: role table and password table have different domains")]
    RoleDomain,
    #[error("digest-length: digest for {user} is {actual} bytes, scheme {scheme} needs {expected}")]
    DigestLength { user: UserId, scheme: &'static str, expected: usize, actual: usize },
}

impl InvariantViolation {
    /// Short stable name of the violated invariant.
    pub fn name(&self) -> &'static str {
        match self {
            InvariantViolation::RegisteredUsers => "registered-users",
            InvariantViolation::SaltingDomain => "salting-domain",
            InvariantViolation::RoleDomain => "role-domain",
            InvariantViolation::DigestLength { .. } => "digest-length",
        }
    }
}

/// Registered users with their salted digests, salts and roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialTable {
    scheme: HashScheme,
    entries: BTreeMap<UserId, Entry>,
}

/// Salt used for the dummy hash computed for unknown usernames, so that a
/// miss costs the same as a wrong password.
const DUMMY_SALT: [u8; 16] = [0x5a; 16];

impl CredentialTable {
    pub fn new(scheme: HashScheme) -> Self {
        CredentialTable { scheme, entries: BTreeMap::new() }
    }

    /// Rebuilds a table from its separate component maps, checking the
    /// state invariants.
    pub fn from_parts(
        scheme: HashScheme,
        registered_users: BTreeSet<UserId>,
        pwd_db: BTreeMap<UserId, Digest>,
        salting: BTreeMap<UserId, Salt>,
        roles: BTreeMap<UserId, Role>,
    ) -> Result<Self, InvariantViolation> {
        if !registered_users.iter().eq(pwd_db.keys()) {
            return Err(InvariantViolation::RegisteredUsers);
        }
        if !pwd_db.keys().eq(salting.keys()) {
            return Err(InvariantViolation::SaltingDomain);
        }
        if !pwd_db.keys().eq(roles.keys()) {
            return Err(InvariantViolation::RoleDomain);
        }
        let mut salting = salting;
        let mut roles = roles;
        let entries = pwd_db
            .into_iter()
            .map(|(user, digest)| {
                let salt = salting.remove(&user).expect("domains checked");
                let role = roles.remove(&user).expect("domains checked");
                (user, Entry { digest, salt, role })
            })
            .collect();
        let table = CredentialTable { scheme, entries };
        table.check_invariants()?;
        Ok(table)
    }

    pub fn scheme(&self) -> HashScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, user: &UserId) -> Option<&Entry> {
        self.entries.get(user)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&UserId, &Entry)> {
        self.entries.iter()
    }

    pub fn contains(&self, user: &UserId) -> bool {
        self.entries.contains_key(user)
    }

    pub fn role_of(&self, user: &UserId) -> Option<Role> {
        self.entries.get(user).map(|e| e.role)
    }

    pub fn registered_users(&self) -> BTreeSet<UserId> {
        self.entries.keys().cloned().collect()
    }

    pub fn pwd_db(&self) -> BTreeMap<UserId, Digest> {
        self.entries.iter().map(|(u, e)| (u.clone(), e.digest.clone())).collect()
    }

    pub fn salting(&self) -> BTreeMap<UserId, Salt> {
        self.entries.iter().map(|(u, e)| (u.clone(), e.salt.clone())).collect()
    }

    pub fn roles(&self) -> BTreeMap<UserId, Role> {
        self.entries.iter().map(|(u, e)| (u.clone(), e.role)).collect()
    }

    /// Checks every state invariant against the component views.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let users = self.registered_users();
        let pwd_db = self.pwd_db();
        let salting = self.salting();
        if !users.iter().eq(pwd_db.keys()) {
            return Err(InvariantViolation::RegisteredUsers);
        }
        if !pwd_db.keys().eq(salting.keys()) {
            return Err(InvariantViolation::SaltingDomain);
        }
        let expected = self.scheme.output_len();
        for (user, digest) in &pwd_db {
            if digest.len() != expected {
                return Err(InvariantViolation::DigestLength {
                    user: user.clone(),
                    scheme: self.scheme.name(),
                    expected,
                    actual: digest.len(),
                });
            }
        }
        Ok(())
    }

    /// Does `pwd` hash to the stored digest for `user`? Unknown users burn a
    /// dummy hash and compare against nothing.
    fn credential_matches(&self, user: &UserId, pwd: &Secret) -> Option<bool> {
        match self.entries.get(user) {
            Some(entry) => {
                let computed = encrypt(self.scheme, &entry.salt, pwd);
                Some(computed.as_bytes().ct_eq(entry.digest.as_bytes()).into())
            }
            None => {
                let _ = encrypt(self.scheme, &Salt::from_bytes(DUMMY_SALT.to_vec()), pwd);
                None
            }
        }
    }

    fn check(&self, user: &UserId, pwd: &Secret) -> AuthOutcome {
        match self.credential_matches(user, pwd) {
            Some(true) => AuthOutcome::OK,
            Some(false) => AuthOutcome::fail(Detail::InvalidCredential),
            None => AuthOutcome::fail(Detail::UserIdNotInUse),
        }
    }

    fn fresh_entry(&self, pwd: &Secret, role: Role) -> Entry {
        let salt = generate_salt();
        Entry { digest: encrypt(self.scheme, &salt, pwd), salt, role }
    }

    /// Read-only: succeeds iff the user exists and the password matches.
    pub fn login(&self, username: &UserId, pwd: &Secret) -> AuthOutcome {
        self.check(username, pwd)
    }

    pub fn change_password(&mut self, username: &UserId, oldpwd: &Secret, newpwd: &Secret) -> AuthOutcome {
        let outcome = self.check(username, oldpwd);
        if outcome.is_success() {
            let role = self.entries[username].role;
            let entry = self.fresh_entry(newpwd, role);
            self.entries.insert(username.clone(), entry);
        }
        outcome
    }

    pub fn add_credential(&mut self, username: &UserId, pwd: &Secret, role: Role) -> AuthOutcome {
        if self.entries.contains_key(username) {
            return AuthOutcome::fail(Detail::UserIdInUse);
        }
        let entry = self.fresh_entry(pwd, role);
        self.entries.insert(username.clone(), entry);
        AuthOutcome::OK
    }

    pub fn remove_credential(&mut self, username: &UserId) -> AuthOutcome {
        match self.entries.remove(username) {
            Some(_) => AuthOutcome::OK,
            None => AuthOutcome::fail(Detail::UserIdNotInUse),
        }
    }

    /// Administrative reset: no knowledge of the old password required.
    pub fn reset_password(&mut self, username: &UserId, newpwd: &Secret) -> AuthOutcome {
        let Some(role) = self.role_of(username) else {
            return AuthOutcome::fail(Detail::UserIdNotInUse);
        };
        let entry = self.fresh_entry(newpwd, role);
        self.entries.insert(username.clone(), entry);
        AuthOutcome::OK
    }

    /// Inserts an entry verbatim. Used to build fixtures with known salts.
    fn insert_raw(&mut self, user: UserId, entry: Entry) {
        self.entries.insert(user, entry);
    }
}

/// Three end users plus one administrator.
///
/// Each row is `(username, password, stored digest)`. The digests are
/// unsalted MD5 of the password.
pub const FIXTURE_USERS: [(&str, &str, &str, Role); 4] = [
    ("ali", "pwdx", "6f8cac5b994687f7a05619c3324fbc5e", Role::EndUser),
    ("mark", "mrk3000", "8d137ac4eec0df89f089540ac19ac99c", Role::EndUser),
    // A 31-digit variant, a4375b7cc7511652d0029cbffff4269, drops the
    // trailing 5. This is MD5("wnd1980").
    ("john", "wnd1980", "a4375b7cc7511652d0029cbffff42695", Role::EndUser),
    ("root", "rootpw", "ea2731994354fafb26e0344732dd2c02", Role::Administrator),
];

/// The truncated 31-digit john digest. Not valid MD5 output.
pub const TRUNCATED_JOHN_DIGEST: &str = "a4375b7cc7511652d0029cbffff4269";

/// Builds the fixture table: md5-compat, empty salts, literal digests.
pub fn init_fixture() -> CredentialTable {
    let mut table = CredentialTable::new(HashScheme::Md5Compat);
    for (user, _, digest, role) in FIXTURE_USERS {
        table.insert_raw(
            UserId::new(user).expect("fixture usernames are valid"),
            Entry { digest: Digest::from_hex(digest).expect("fixture digests are hex"), salt: Salt::default(), role },
        );
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::KdfCost;

    fn u(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }
    fn p(s: &str) -> Secret {
        Secret::new(s).unwrap()
    }

    #[test]
    fn fixture_shape() {
        let t = init_fixture();
        t.check_invariants().unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.entry(&u("ali")).unwrap().digest.to_hex(), "6f8cac5b994687f7a05619c3324fbc5e");
        assert_eq!(t.entry(&u("mark")).unwrap().digest.to_hex(), "8d137ac4eec0df89f089540ac19ac99c");
        assert!(t.entries().all(|(_, e)| e.salt.is_empty()));
        assert_eq!(t.role_of(&u("root")), Some(Role::Administrator));
        assert_eq!(t.role_of(&u("ali")), Some(Role::EndUser));
        assert_eq!(TRUNCATED_JOHN_DIGEST.len(), 31);
        assert!(FIXTURE_USERS[2].2.starts_with(TRUNCATED_JOHN_DIGEST));
        for (user, pwd, _, _) in FIXTURE_USERS {
            assert!(t.login(&u(user), &p(pwd)).is_success(), "{user}");
        }
    }

    #[test]
    fn login_cases() {
        let t = init_fixture();
        assert_eq!(t.login(&u("ali"), &p("pwdx")), AuthOutcome::OK);
        assert_eq!(t.login(&u("ali"), &p("wrong")), AuthOutcome::fail(Detail::InvalidCredential));
        assert_eq!(t.login(&u("nobody"), &p("x")), AuthOutcome::fail(Detail::UserIdNotInUse));
    }

    #[test]
    fn change_password_cases() {
        let mut t = init_fixture();
        assert!(t.change_password(&u("mark"), &p("mrk3000"), &p("newpw")).is_success());
        assert!(t.login(&u("mark"), &p("newpw")).is_success());
        assert!(!t.login(&u("mark"), &p("mrk3000")).is_success());
        assert_eq!(t.role_of(&u("mark")), Some(Role::EndUser));
        assert_eq!(t.entry(&u("mark")).unwrap().salt.len(), 16);

        let before = init_fixture();
        let mut t = before.clone();
        assert_eq!(t.change_password(&u("mark"), &p("bad"), &p("x")).report, Report::Failure);
        assert_eq!(t, before);
        assert_eq!(t.change_password(&u("ghost"), &p("a"), &p("b")), AuthOutcome::fail(Detail::UserIdNotInUse));
    }

    #[test]
    fn add_credential_cases() {
        let mut t = init_fixture();
        assert!(t.add_credential(&u("zoe"), &p("pw9"), Role::EndUser).is_success());
        assert_eq!(t.len(), 5);
        assert_eq!(t.add_credential(&u("ali"), &p("x"), Role::EndUser), AuthOutcome::fail(Detail::UserIdInUse));

        let mut empty = CredentialTable::new(HashScheme::StrongKdf(KdfCost::LIGHT));
        assert!(empty.add_credential(&u("a"), &p("p"), Role::Administrator).is_success());
        assert!(empty.login(&u("a"), &p("p")).is_success());
        empty.check_invariants().unwrap();
    }

    #[test]
    fn remove_credential_cases() {
        let mut t = init_fixture();
        assert!(t.remove_credential(&u("john")).is_success());
        assert!(!t.registered_users().contains(&u("john")));
        assert_eq!(t.remove_credential(&u("ghost")).report, Report::Failure);

        let orig = init_fixture();
        let mut t = orig.clone();
        t.add_credential(&u("x"), &p("y"), Role::EndUser);
        t.remove_credential(&u("x"));
        assert_eq!(t, orig);
    }

    #[test]
    fn reset_password_cases() {
        let mut t = init_fixture();
        assert!(t.reset_password(&u("ali"), &p("fresh1")).is_success());
        assert!(t.login(&u("ali"), &p("fresh1")).is_success());
        let first = t.entry(&u("ali")).unwrap().digest.clone();
        assert!(t.reset_password(&u("ali"), &p("fresh1")).is_success());
        assert_ne!(t.entry(&u("ali")).unwrap().digest, first);
        assert_eq!(t.reset_password(&u("ghost"), &p("x")).report, Report::Failure);
    }

    #[test]
    fn from_parts_names_violations() {
        let t = init_fixture();
        let mut salting = t.salting();
        salting.remove(&u("ali"));
        let err =
            CredentialTable::from_parts(t.scheme(), t.registered_users(), t.pwd_db(), salting, t.roles()).unwrap_err();
        assert_eq!(err.name(), "salting-domain");

        let mut pwd_db = t.pwd_db();
        pwd_db.insert(u("ali"), Digest::from_bytes(vec![0; 15]));
        let err =
            CredentialTable::from_parts(t.scheme(), t.registered_users(), pwd_db, t.salting(), t.roles()).unwrap_err();
        assert_eq!(err.name(), "digest-length");

        let mut users = t.registered_users();
        users.insert(u("extra"));
        let err = CredentialTable::from_parts(t.scheme(), users, t.pwd_db(), t.salting(), t.roles()).unwrap_err();
        assert_eq!(err.name(), "registered-users");

        let rebuilt =
            CredentialTable::from_parts(t.scheme(), t.registered_users(), t.pwd_db(), t.salting(), t.roles()).unwrap();
        assert_eq!(rebuilt, t);
    }
}
