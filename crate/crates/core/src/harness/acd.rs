//! The gateway's process model and the conformance check between it and
//! [`SessionMachine`](crate::session::SessionMachine).
//!
//! Guards here are written directly against the credential table and the
//! certificate repository, not through the session machine, so that the
//! model stays an independent reference.

use std::collections::BTreeSet;

use crate::domain::{KeyMaterial, Name, Role, Secret, SerialNb, Timestamp, UserId};
use crate::repository::Certificate;
use crate::session::{Args, Backend, EventKind, Operation, Output, ProtocolEvent, SessionMachine};

use super::{Domain, Event, Guards, HarnessError, ProcessEnvironment, ProcessTerm, Trace};

/// Definition file for the gateway's authentication server and client.
pub const ACD_DEFINITIONS: &str = include_str!("../../csp/acd.csp");

const GUARDS: [&str; 11] = [
    "pre-login",
    "pre-change-password",
    "pre-logout",
    "pre-reset-password",
    "pre-add-credential",
    "pre-remove-credential",
    "pre-cert-add",
    "pre-cert-remove",
    "pre-proxy-create",
    "pre-proxy-revoke",
    "is-admin",
];

/// Guards over a [`Backend`], evaluated at a fixed clock reading.
#[derive(Debug, Clone, Copy)]
pub struct AcdGuards {
    pub now: Timestamp,
}

fn user(s: &str) -> Option<UserId> {
    UserId::new(s).ok()
}

fn secret(s: &str) -> Option<Secret> {
    Secret::new(s.as_bytes()).ok()
}

fn serial(s: &str) -> Option<SerialNb> {
    s.parse().ok().map(SerialNb)
}

impl AcdGuards {
    fn holds(&self, id: &str, a: &[String], b: &mut Backend) -> Option<bool> {
        let ok = match (id, a) {
            ("pre-login", [u, p]) => b.table.login(&user(u)?, &secret(p)?).is_success(),
            ("pre-change-password", [me, u, old, new]) => {
                me == u && b.table.change_password(&user(u)?, &secret(old)?, &secret(new)?).is_success()
            }
            ("pre-logout", [me, u]) => me == u && user(u).is_some(),
            ("pre-reset-password", [u, new]) => b.table.reset_password(&user(u)?, &secret(new)?).is_success(),
            ("pre-add-credential", [u, p, role]) => {
                let role: Role = role.parse().ok()?;
                b.table.add_credential(&user(u)?, &secret(p)?, role).is_success()
            }
            ("pre-remove-credential", [u]) => b.table.remove_credential(&user(u)?).is_success(),
            ("pre-cert-add", [cert, key, project]) => {
                let cert = Certificate::from_hex(cert).ok()?;
                let key = KeyMaterial::Private(hex::decode(key).ok()?);
                b.repo.add_certificate(&cert, &key, &Name::new(project.as_str()).ok()?).is_ok()
            }
            ("pre-cert-remove", [s]) => b.repo.remove_certificate_by_serial(serial(s)?).is_ok(),
            ("pre-proxy-create", [me, project, lifetime]) => {
                let lifetime: u64 = lifetime.parse().ok()?;
                b.repo.create_proxy(&user(me)?, &Name::new(project.as_str()).ok()?, lifetime, self.now).is_ok()
            }
            ("pre-proxy-revoke", [s]) => b.repo.revoke_proxy(serial(s)?).is_ok(),
            ("is-admin", [me]) => b.table.role_of(&user(me)?) == Some(Role::Administrator),
            _ => return None,
        };
        Some(ok)
    }
}

impl Guards for AcdGuards {
    type State = Backend;

    fn knows(&self, id: &str) -> bool {
        GUARDS.contains(&id)
    }

    fn eval(&self, id: &str, args: &[String], state: &mut Backend) -> bool {
        // Operations are totalized: a failing call leaves the backend as it was.
        let mut scratch = state.clone();
        match self.holds(id, args, &mut scratch) {
            Some(true) => {
                *state = scratch;
                true
            }
            _ => false,
        }
    }
}

/// Loads the gateway model with guards evaluated at `now`.
pub fn acd_environment(now: Timestamp) -> Result<ProcessEnvironment<AcdGuards>, HarnessError> {
    ProcessEnvironment::parse(ACD_DEFINITIONS, AcdGuards { now })
}

/// The gateway's server process.
pub fn server() -> ProcessTerm {
    ProcessTerm::call("DB", &[])
}

/// The reference client that logs in as `ali`.
pub fn client1() -> ProcessTerm {
    ProcessTerm::call("CLIENT1", &[])
}

/// Names of the three events making up `op`.
pub fn operation_alphabet(op: Operation) -> BTreeSet<String> {
    [EventKind::Announce, EventKind::Request, EventKind::Response]
        .into_iter()
        .map(|k| crate::session::EventName::new(op, k).to_string())
        .collect()
}

/// Every event name the model uses.
pub fn full_alphabet() -> BTreeSet<String> {
    Operation::ALL.into_iter().flat_map(operation_alphabet).collect()
}

/// The model's view of a protocol event. Responses keep only their report.
pub fn to_model_event(e: &ProtocolEvent) -> Event {
    let mut fields = Args::new();
    match e {
        ProtocolEvent::Announce(_) => {}
        ProtocolEvent::Request(_, args) => fields = args.clone(),
        ProtocolEvent::Response(_, report, _) => {
            fields.insert("report".into(), report.as_str().into());
        }
    }
    Event { name: e.name().to_string(), fields }
}

/// Every announce and request a client could send, request fields drawn
/// from `domain`.
pub fn client_alphabet(domain: &Domain) -> Result<Vec<ProtocolEvent>, HarnessError> {
    let mut out = Vec::new();
    for op in Operation::ALL {
        out.push(ProtocolEvent::Announce(op));
        let mut requests = vec![Args::new()];
        for field in op.request_fields() {
            let values = domain.get(*field).ok_or_else(|| HarnessError::NoDomain((*field).into()))?;
            requests = requests
                .into_iter()
                .flat_map(|r| {
                    values.iter().map(move |v| {
                        let mut r = r.clone();
                        r.insert((*field).into(), v.clone());
                        r
                    })
                })
                .collect();
        }
        out.extend(requests.into_iter().map(|args| ProtocolEvent::Request(op, args)));
    }
    Ok(out)
}

/// Traces the session machine produces when driven by any sequence of
/// client events from `alphabet`, up to `depth` events. Refused events do
/// not appear; a request and its response are separate trace events.
pub fn implementation_traces(
    backend: &Backend,
    now: Timestamp,
    alphabet: &[ProtocolEvent],
    depth: usize,
) -> BTreeSet<Trace> {
    fn walk(
        m: &SessionMachine,
        b: &Backend,
        now: Timestamp,
        alphabet: &[ProtocolEvent],
        remaining: usize,
        prefix: &mut Trace,
        out: &mut BTreeSet<Trace>,
    ) {
        out.insert(prefix.clone());
        if remaining == 0 {
            return;
        }
        for e in alphabet {
            let (mut m2, mut b2) = (m.clone(), b.clone());
            let step = m2.step(e, &mut b2, now);
            if step.is_refusal() {
                continue;
            }
            prefix.push(to_model_event(e));
            match step.output {
                Some(Output::Event(resp)) => {
                    out.insert(prefix.clone());
                    if remaining >= 2 {
                        prefix.push(to_model_event(&resp));
                        walk(&m2, &b2, now, alphabet, remaining - 2, prefix, out);
                        prefix.pop();
                    }
                }
                _ => walk(&m2, &b2, now, alphabet, remaining - 1, prefix, out),
            }
            prefix.pop();
        }
    }
    let mut out = BTreeSet::new();
    walk(&SessionMachine::new(), backend, now, alphabet, depth, &mut Vec::new(), &mut out);
    out
}

/// Outcome of comparing model and implementation trace sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conformance {
    pub model_traces: usize,
    pub implementation_traces: usize,
    /// Shortest few traces the model allows but the implementation does not.
    pub only_in_model: Vec<Trace>,
    /// Shortest few traces the implementation produces but the model forbids.
    pub only_in_implementation: Vec<Trace>,
}

impl Conformance {
    pub fn holds(&self) -> bool {
        self.only_in_model.is_empty() && self.only_in_implementation.is_empty()
    }
}

fn shortest(diff: impl Iterator<Item = Trace>) -> Vec<Trace> {
    let mut v: Vec<Trace> = diff.collect();
    v.sort_by_key(Vec::len);
    v.truncate(5);
    v
}

/// Compares every trace of length at most `depth` from the server model
/// with what the session machine does, both starting from `backend`.
pub fn check_conformance(
    backend: &Backend,
    now: Timestamp,
    domain: &Domain,
    depth: usize,
) -> Result<Conformance, HarnessError> {
    let env = acd_environment(now)?;
    let model = env.enumerate_traces(&server(), backend, domain, depth)?;
    let implementation = implementation_traces(backend, now, &client_alphabet(domain)?, depth);
    Ok(Conformance {
        model_traces: model.len(),
        implementation_traces: implementation.len(),
        only_in_model: shortest(model.difference(&implementation).cloned()),
        only_in_implementation: shortest(implementation.difference(&model).cloned()),
    })
}
