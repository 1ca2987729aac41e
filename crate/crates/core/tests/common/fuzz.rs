//! Single fuzz cases, shared by the fuzz tests and the acceptance run.

use std::io::Cursor;

use acd::domain::{KeyMaterial, Name, Role, Secret, SerialNb, UserId};
use acd::gateway::{store, Gateway, WireMessage};
use acd::local_auth::CredentialTable;
use acd::repository::{Certificate, CertificateRepository};
use acd::session::{Args, Backend, Operation, ProtocolEvent, SessionMachine};
use proptest::prelude::*;

use super::NOW;

/// Operation index and three raw byte strings as its inputs.
pub fn raw_case() -> impl Strategy<Value = (usize, Vec<u8>, Vec<u8>, Vec<u8>)> {
    let bytes = || {
        prop_oneof![
            prop::collection::vec(any::<u8>(), 0..24),
            prop::sample::select(vec![
                b"ali".to_vec(),
                b"pwdx".to_vec(),
                b"root".to_vec(),
                b"rootpw".to_vec(),
                b"1".to_vec()
            ]),
        ]
    };
    (0..16usize, bytes(), bytes(), bytes())
}

/// Runs one credential-table or repository operation on raw bytes. Inputs
/// that are not even well-formed values count as a Failure with no call.
pub fn totalization_case(
    table: &CredentialTable,
    repo: &CertificateRepository,
    (op, a, b, c): &(usize, Vec<u8>, Vec<u8>, Vec<u8>),
) -> Result<(), String> {
    let mut t = table.clone();
    let mut r = repo.clone();
    let user = UserId::from_bytes(a).ok();
    let sb = Secret::new(b.clone()).ok();
    let sc = Secret::new(c.clone()).ok();
    let name = std::str::from_utf8(c).ok().and_then(|s| Name::new(s).ok());
    let serial = SerialNb(
        u64::from_le_bytes(
            a.iter().copied().chain(std::iter::repeat(0)).take(8).collect::<Vec<_>>().try_into().unwrap(),
        ) % 8,
    );

    let ok = match op {
        0 => matches!((&user, &sb), (Some(u), Some(p)) if t.login(u, p).is_success()),
        1 => matches!((&user, &sb, &sc), (Some(u), Some(o), Some(n)) if t.change_password(u, o, n).is_success()),
        2 => matches!((&user, &sb), (Some(u), Some(p)) if t.add_credential(u, p, Role::EndUser).is_success()),
        3 => matches!(&user, Some(u) if t.remove_credential(u).is_success()),
        4 => matches!((&user, &sb), (Some(u), Some(p)) if t.reset_password(u, p).is_success()),
        5 | 6 => match (Certificate::decode(a), &name) {
            (Ok(cert), Some(project)) => r.add_certificate(&cert, &KeyMaterial::Private(b.clone()), project).is_ok(),
            _ => false,
        },
        7 => match Certificate::decode(a) {
            Ok(cert) => r.remove_certificate(&cert).is_ok(),
            Err(_) => false,
        },
        8 => r.remove_certificate_by_serial(serial).is_ok(),
        9 | 10 => match (&user, &name) {
            (Some(u), Some(project)) => {
                let lifetime = b.iter().fold(0u64, |acc, x| acc.wrapping_mul(31).wrapping_add(u64::from(*x)));
                r.create_proxy(u, project, lifetime, NOW).is_ok()
            }
            _ => false,
        },
        11 => r.revoke_proxy(serial).is_ok(),
        _ => matches!((&user, &sb), (Some(u), Some(p)) if t.login(u, p).is_success()),
    };
    if !ok {
        let before = store::encode(&Backend::new(table.clone(), repo.clone()));
        let after = store::encode(&Backend::new(t.clone(), r.clone()));
        if before != after {
            return Err(format!("operation {op} failed but changed the state"));
        }
    }
    if let Err(e) = t.check_invariants() {
        return Err(format!("operation {op}: {e}"));
    }
    if let Err(e) = r.check_invariants() {
        return Err(format!("operation {op}: {e}"));
    }
    Ok(())
}

/// One request of any operation with arbitrary field values, sent in an
/// administrator session (or a fresh one for Login). Checks that a
/// response comes back and that Failure changes nothing.
pub fn session_case(backend: &Backend, op: Operation, values: &[String], extra: bool) -> Result<(), String> {
    let mut b = backend.clone();
    let mut m = SessionMachine::new();
    let login = [
        ProtocolEvent::Announce(Operation::Login),
        ProtocolEvent::request(Operation::Login, [("username", "root"), ("pwd", "rootpw")]),
    ];
    if op != Operation::Login {
        for e in &login {
            m.step(e, &mut b, NOW);
        }
    }
    let logged_in = b.clone();
    let mut args: Args =
        op.request_fields().iter().zip(values.iter().cycle()).map(|(f, v)| ((*f).to_owned(), v.clone())).collect();
    if extra {
        args.insert("extra".into(), values.first().cloned().unwrap_or_default());
    }
    m.step(&ProtocolEvent::Announce(op), &mut b, NOW);
    let step = m.step(&ProtocolEvent::Request(op, args), &mut b, NOW);
    let report = match step.output {
        Some(acd::session::Output::Event(ProtocolEvent::Response(rop, report, _))) if rop == op => report,
        other => return Err(format!("{}: expected a response, got {other:?}", op.name())),
    };
    if !report.is_success() && store::encode(&b) != store::encode(&logged_in) {
        return Err(format!("{} failed but changed the state", op.name()));
    }
    Ok(())
}

/// Feeds raw bytes to a gateway connection; every reply must be one
/// well-formed wire message.
pub fn wire_case(gw: &Gateway, input: &[u8]) -> Result<(), String> {
    let mut out = Vec::new();
    gw.handle_connection(Cursor::new(input.to_vec()), &mut out).map_err(|e| e.to_string())?;
    if !out.is_empty() && !out.ends_with(b"\n") {
        return Err("reply not newline-terminated".into());
    }
    for line in out.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
        let m = WireMessage::decode(line).map_err(|e| format!("bad reply {:?}: {e}", String::from_utf8_lossy(line)))?;
        if m.encode().as_bytes() != line {
            return Err(format!("non-canonical reply {:?}", String::from_utf8_lossy(line)));
        }
    }
    Ok(())
}

/// Byte streams biased towards almost-valid protocol lines.
pub fn wire_input() -> impl Strategy<Value = Vec<u8>> {
    let valid = prop::sample::select(vec![
        br#"{"event":"Login","seq":1}"#.to_vec(),
        br#"{"event":"LoginRequest","args":{"username":"root","pwd":"rootpw"},"seq":2}"#.to_vec(),
        br#"{"event":"LoginRequest","args":{"username":"ali","pwd":"pwdx"}}"#.to_vec(),
        br#"{"event":"AddCredential"}"#.to_vec(),
        br#"{"event":"AddCredentialRequest","args":{"username":"zoe","pwd":"z","role":"EndUser"}}"#.to_vec(),
        br#"{"event":"ProxyList"}"#.to_vec(),
        br#"{"event":"ProxyListRequest","args":{}}"#.to_vec(),
        br#"{"event":"Logout"}"#.to_vec(),
        br#"{"event":"LoginResponse","report":"Success"}"#.to_vec(),
    ]);
    let junk = prop::collection::vec(any::<u8>(), 0..40);
    let piece = prop_oneof![3 => valid, 1 => junk];
    prop::collection::vec((piece, prop::bool::weighted(0.9)), 0..12).prop_map(|pieces| {
        let mut out = Vec::new();
        for (p, newline) in pieces {
            out.extend(p);
            if newline {
                out.push(b'\n');
            }
        }
        out
    })
}
