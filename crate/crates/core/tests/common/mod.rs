#![allow(dead_code)]

pub mod fuzz;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use acd::domain::{KeyMaterial, Name, Report, Role, Secret, SerialNb, SubjectDN, Timestamp, UserId};
use acd::local_auth::CredentialTable;
use acd::repository::{generate_key_pair, Certificate, CertificateRepository};
use proptest::prelude::*;

pub const NOW: Timestamp = 1_700_000_000;

// ---------------------------------------------------------------------------
// MD5, written from RFC 1321 and sharing nothing with the crate under test.

pub fn md5_oracle(msg: &[u8]) -> [u8; 16] {
    const SHIFTS: [[u32; 4]; 4] = [[7, 12, 17, 22], [5, 9, 14, 20], [4, 11, 16, 23], [6, 10, 15, 21]];
    // T[i] = floor(2^32 * |sin(i)|), i = 1..=64.
    let t: Vec<u32> = (1..=64).map(|i| ((i as f64).sin().abs() * 4_294_967_296.0) as u32).collect();

    let mut data = msg.to_vec();
    data.push(0x80);
    while data.len() % 64 != 56 {
        data.push(0);
    }
    data.extend_from_slice(&((msg.len() as u64).wrapping_mul(8)).to_le_bytes());

    let mut state: [u32; 4] = [0x6745_2301, 0xefcd_ab89, 0x98ba_dcfe, 0x1032_5476];
    for block in data.chunks(64) {
        let m: Vec<u32> = block.chunks(4).map(|w| u32::from_le_bytes([w[0], w[1], w[2], w[3]])).collect();
        let [mut a, mut b, mut c, mut d] = state;
        for i in 0..64 {
            let round = i / 16;
            let (f, g) = match round {
                0 => ((b & c) | (!b & d), i),
                1 => ((b & d) | (c & !d), (5 * i + 1) % 16),
                2 => (b ^ c ^ d, (3 * i + 5) % 16),
                _ => (c ^ (b | !d), (7 * i) % 16),
            };
            let sum = a.wrapping_add(f).wrapping_add(t[i]).wrapping_add(m[g]);
            a = d;
            d = c;
            c = b;
            b = b.wrapping_add(sum.rotate_left(SHIFTS[round][i % 4]));
        }
        state[0] = state[0].wrapping_add(a);
        state[1] = state[1].wrapping_add(b);
        state[2] = state[2].wrapping_add(c);
        state[3] = state[3].wrapping_add(d);
    }
    let mut out = [0u8; 16];
    for (i, w) in state.iter().enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn md5_oracle_hex(msg: &[u8]) -> String {
    md5_oracle(msg).iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Credential-table operations and a cleartext reference model.

pub const USERS: [&str; 5] = ["ali", "mark", "john", "root", "zoe"];
pub const PASSWORDS: [&str; 5] = ["pwdx", "mrk3000", "wnd1980", "rootpw", "secret"];

#[derive(Debug, Clone)]
pub enum AuthOp {
    Login(usize, usize),
    ChangePassword(usize, usize, usize),
    AddCredential(usize, usize, bool),
    RemoveCredential(usize),
    ResetPassword(usize, usize),
}

pub fn auth_op() -> impl Strategy<Value = AuthOp> {
    let u = 0..USERS.len();
    let p = || 0..PASSWORDS.len();
    prop_oneof![
        (u.clone(), p()).prop_map(|(u, p)| AuthOp::Login(u, p)),
        (u.clone(), p(), p()).prop_map(|(u, o, n)| AuthOp::ChangePassword(u, o, n)),
        (u.clone(), p(), any::<bool>()).prop_map(|(u, p, a)| AuthOp::AddCredential(u, p, a)),
        u.clone().prop_map(AuthOp::RemoveCredential),
        (u, p()).prop_map(|(u, p)| AuthOp::ResetPassword(u, p)),
    ]
}

fn uid(i: usize) -> UserId {
    UserId::new(USERS[i]).unwrap()
}

fn pw(i: usize) -> Secret {
    Secret::new(PASSWORDS[i]).unwrap()
}

fn role(admin: bool) -> Role {
    if admin {
        Role::Administrator
    } else {
        Role::EndUser
    }
}

pub fn apply_auth(t: &mut CredentialTable, op: &AuthOp) -> Report {
    match *op {
        AuthOp::Login(u, p) => t.login(&uid(u), &pw(p)).report,
        AuthOp::ChangePassword(u, o, n) => t.change_password(&uid(u), &pw(o), &pw(n)).report,
        AuthOp::AddCredential(u, p, a) => t.add_credential(&uid(u), &pw(p), role(a)).report,
        AuthOp::RemoveCredential(u) => t.remove_credential(&uid(u)).report,
        AuthOp::ResetPassword(u, p) => t.reset_password(&uid(u), &pw(p)).report,
    }
}

/// Passwords kept in the clear; the obvious semantics with no hashing.
#[derive(Debug, Clone, Default)]
pub struct ReferenceModel {
    users: BTreeMap<usize, (usize, bool)>,
}

impl ReferenceModel {
    /// The fixture: first four users with their own passwords, `root` admin.
    pub fn fixture() -> Self {
        ReferenceModel { users: (0..4).map(|i| (i, (i, i == 3))).collect() }
    }

    pub fn apply(&mut self, op: &AuthOp) -> Report {
        let ok = match *op {
            AuthOp::Login(u, p) => self.users.get(&u).is_some_and(|(q, _)| *q == p),
            AuthOp::ChangePassword(u, o, n) => match self.users.get_mut(&u) {
                Some((q, _)) if *q == o => {
                    *q = n;
                    true
                }
                _ => false,
            },
            AuthOp::AddCredential(u, p, a) => {
                let fresh = !self.users.contains_key(&u);
                if fresh {
                    self.users.insert(u, (p, a));
                }
                fresh
            }
            AuthOp::RemoveCredential(u) => self.users.remove(&u).is_some(),
            AuthOp::ResetPassword(u, p) => match self.users.get_mut(&u) {
                Some((q, _)) => {
                    *q = p;
                    true
                }
                None => false,
            },
        };
        if ok {
            Report::Success
        } else {
            Report::Failure
        }
    }
}

// ---------------------------------------------------------------------------
// Repository operations over a small pool of certificates.

pub struct CertPool {
    /// (certificate, matching private key)
    pub certs: Vec<(Certificate, KeyMaterial)>,
    pub stray_key: KeyMaterial,
}

impl CertPool {
    /// Four certificates: serials 1, 2, 2 (a clash) and an expired 3.
    pub fn new() -> Self {
        let mk = |serial, subject: &str, nb, na| {
            let (public, private) = generate_key_pair();
            let c =
                Certificate::self_signed(SerialNb(serial), SubjectDN::new(subject).unwrap(), nb, na, &public, &private)
                    .unwrap();
            (c, private)
        };
        CertPool {
            certs: vec![
                mk(1, "/O=Grid/CN=alpha", NOW - 100, NOW + 1_000_000),
                mk(2, "/O=Grid/CN=beta", NOW - 100, NOW + 1_000_000),
                mk(2, "/O=Grid/CN=beta-clash", NOW - 100, NOW + 1_000_000),
                mk(3, "/O=Grid/CN=old", NOW - 1000, NOW - 10),
            ],
            stray_key: generate_key_pair().1,
        }
    }
}

impl Default for CertPool {
    fn default() -> Self {
        Self::new()
    }
}

pub const PROJECTS: [&str; 3] = ["atlas", "cms", "lhcb"];

#[derive(Debug, Clone)]
pub enum RepoOp {
    Add { cert: usize, right_key: bool, project: usize },
    Remove { cert: usize },
    RemoveBySerial(u64),
    CreateProxy { user: usize, project: usize, lifetime: u64, skew: i64 },
    Revoke(u64),
}

pub fn repo_op() -> impl Strategy<Value = RepoOp> {
    prop_oneof![
        3 => (0..4usize, prop::bool::weighted(0.8), 0..PROJECTS.len())
            .prop_map(|(cert, right_key, project)| RepoOp::Add { cert, right_key, project }),
        1 => (0..4usize).prop_map(|cert| RepoOp::Remove { cert }),
        1 => (0..8u64).prop_map(RepoOp::RemoveBySerial),
        3 => (0..USERS.len(), 0..PROJECTS.len(), prop_oneof![Just(0u64), 1..200_000u64], -5i64..5)
            .prop_map(|(user, project, lifetime, skew)| RepoOp::CreateProxy { user, project, lifetime, skew }),
        2 => (0..10u64).prop_map(RepoOp::Revoke),
    ]
}

pub fn apply_repo(r: &mut CertificateRepository, pool: &CertPool, op: &RepoOp) -> Report {
    let ok = match *op {
        RepoOp::Add { cert, right_key, project } => {
            let (c, k) = &pool.certs[cert];
            let key = if right_key { k } else { &pool.stray_key };
            r.add_certificate(c, key, &Name::new(PROJECTS[project]).unwrap()).is_ok()
        }
        RepoOp::Remove { cert } => r.remove_certificate(&pool.certs[cert].0).is_ok(),
        RepoOp::RemoveBySerial(s) => r.remove_certificate_by_serial(SerialNb(s)).is_ok(),
        RepoOp::CreateProxy { user, project, lifetime, skew } => {
            let now = NOW.saturating_add_signed(skew * 1000);
            r.create_proxy(&uid(user), &Name::new(PROJECTS[project]).unwrap(), lifetime, now).is_ok()
        }
        RepoOp::Revoke(s) => r.revoke_proxy(SerialNb(s)).is_ok(),
    };
    if ok {
        Report::Success
    } else {
        Report::Failure
    }
}

// ---------------------------------------------------------------------------
// A gateway running as a separate process.

pub struct GatewayProcess {
    pub child: Child,
    pub addr: String,
}

impl GatewayProcess {
    /// Starts `acd serve` on an ephemeral port and waits until it listens.
    pub fn start(dir: &Path, extra: &[&str], env: &[(&str, &str)]) -> Self {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_acd"));
        cmd.arg("serve")
            .arg("--listen")
            .arg("127.0.0.1:0")
            .arg("--store")
            .arg(dir.join("store.json"))
            .arg("--audit")
            .arg(dir.join("audit.log"))
            .args(extra)
            .env("RUST_LOG", "warn")
            .env_remove("ACD_FAULT_KILL_AFTER_AUDIT")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped());
        for (k, v) in env {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn().expect("spawn gateway");
        let stderr = child.stderr.take().unwrap();
        let mut lines = BufReader::new(stderr).lines();
        let addr = loop {
            match lines.next() {
                Some(Ok(line)) => {
                    if let Some(addr) = line.strip_prefix("acd gateway listening on ") {
                        break addr.trim().to_owned();
                    }
                }
                other => {
                    let _ = child.kill();
                    panic!("gateway did not start: {other:?}");
                }
            }
        };
        // Keep draining stderr so the child never blocks on a full pipe.
        std::thread::spawn(move || for _ in lines {});
        GatewayProcess { child, addr }
    }
}

impl Drop for GatewayProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
