//! Per-connection session protocol.
//!
//! Every operation is a three-event handshake: the client announces the
//! operation (`Login`), sends its inputs (`LoginRequest`), and the gateway
//! answers with exactly one report (`LoginResponse`). Which operations may
//! be announced depends on the session phase:
//!
//! | phase                        | offered                                     |
//! |------------------------------|---------------------------------------------|
//! | unauthenticated              | `Login`                                     |
//! | authenticated, end user      | `ChangePassword`, `Logout`                  |
//! | authenticated, administrator | the above plus every administrative operation |
//!
//! Any other event is refused: the machine and the backend are left exactly
//! as they were and the caller is told which event was refused.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::domain::{KeyMaterial, Name, Report, Role, Secret, SerialNb, Timestamp, UserId};
use crate::local_auth::CredentialTable;
use crate::repository::{Certificate, CertificateRepository};

/// Field name to value, for requests and for response outputs.
pub type Args = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operation {
    Login,
    ChangePassword,
    ResetPassword,
    AddCredential,
    RemoveCredential,
    Logout,
    CertAdd,
    CertRemove,
    ProxyCreate,
    ProxyRevoke,
    ProxyList,
}

impl Operation {
    pub const ALL: [Operation; 11] = [
        Operation::Login,
        Operation::ChangePassword,
        Operation::ResetPassword,
        Operation::AddCredential,
        Operation::RemoveCredential,
        Operation::Logout,
        Operation::CertAdd,
        Operation::CertRemove,
        Operation::ProxyCreate,
        Operation::ProxyRevoke,
        Operation::ProxyList,
    ];

    /// Offered to authenticated end users.
    pub const END_USER: [Operation; 2] = [Operation::ChangePassword, Operation::Logout];

    pub fn name(self) -> &'static str {
        match self {
            Operation::Login => "Login",
            Operation::ChangePassword => "ChangePassword",
            Operation::ResetPassword => "ResetPassword",
            Operation::AddCredential => "AddCredential",
            Operation::RemoveCredential => "RemoveCredential",
            Operation::Logout => "Logout",
            Operation::CertAdd => "CertAdd",
            Operation::CertRemove => "CertRemove",
            Operation::ProxyCreate => "ProxyCreate",
            Operation::ProxyRevoke => "ProxyRevoke",
            Operation::ProxyList => "ProxyList",
        }
    }

    /// Exact set of fields a request for this operation must carry.
    pub fn request_fields(self) -> &'static [&'static str] {
        match self {
            Operation::Login => &["username", "pwd"],
            Operation::ChangePassword => &["username", "oldpwd", "newpwd"],
            Operation::ResetPassword => &["username", "newpwd"],
            Operation::AddCredential => &["username", "pwd", "role"],
            Operation::RemoveCredential => &["username"],
            Operation::Logout => &["username"],
            Operation::CertAdd => &["cert", "key", "project"],
            Operation::CertRemove => &["serial"],
            Operation::ProxyCreate => &["project", "lifetime"],
            Operation::ProxyRevoke => &["serial"],
            Operation::ProxyList => &[],
        }
    }

    /// Requires the administrator role.
    pub fn is_admin(self) -> bool {
        !matches!(self, Operation::Login | Operation::ChangePassword | Operation::Logout)
    }

    /// Can change the credential table or the repository.
    pub fn mutates(self) -> bool {
        !matches!(self, Operation::Login | Operation::Logout | Operation::ProxyList)
    }

    /// True for the six core authentication operations.
    pub fn is_core(self) -> bool {
        matches!(
            self,
            Operation::Login
                | Operation::ChangePassword
                | Operation::ResetPassword
                | Operation::AddCredential
                | Operation::RemoveCredential
                | Operation::Logout
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Announce,
    Request,
    Response,
}

/// One member of the event alphabet, e.g. `ChangePasswordRequest`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventName {
    pub op: Operation,
    pub kind: EventKind,
}

impl EventName {
    pub fn new(op: Operation, kind: EventKind) -> Self {
        EventName { op, kind }
    }

    pub fn all() -> impl Iterator<Item = EventName> {
        Operation::ALL.into_iter().flat_map(|op| {
            [EventKind::Announce, EventKind::Request, EventKind::Response].map(|kind| EventName { op, kind })
        })
    }
}

impl fmt::Display for EventName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.op.name())?;
        match self.kind {
            EventKind::Announce => Ok(()),
            EventKind::Request => f.write_str("Request"),
            EventKind::Response => f.write_str("Response"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown event name {0:?}")]
pub struct UnknownEvent(pub String);

impl FromStr for EventName {
    type Err = UnknownEvent;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventName::all().find(|e| e.to_string() == s).ok_or_else(|| UnknownEvent(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolEvent {
    Announce(Operation),
    Request(Operation, Args),
    /// A report plus any operation outputs (proxy serial, proxy listing).
    Response(Operation, Report, Args),
}

impl ProtocolEvent {
    pub fn name(&self) -> EventName {
        match self {
            ProtocolEvent::Announce(op) => EventName::new(*op, EventKind::Announce),
            ProtocolEvent::Request(op, _) => EventName::new(*op, EventKind::Request),
            ProtocolEvent::Response(op, ..) => EventName::new(*op, EventKind::Response),
        }
    }

    pub fn request<'a>(op: Operation, fields: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        ProtocolEvent::Request(op, fields.into_iter().map(|(k, v)| (k.to_owned(), v.to_owned())).collect())
    }

    pub fn report(&self) -> Option<Report> {
        match self {
            ProtocolEvent::Response(_, r, _) => Some(*r),
            _ => None,
        }
    }
}

impl fmt::Display for ProtocolEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        match self {
            ProtocolEvent::Announce(_) => Ok(()),
            ProtocolEvent::Request(_, args) => {
                let redacted: Vec<String> = args
                    .iter()
                    .map(|(k, v)| if is_sensitive(k) { format!("{k}=*") } else { format!("{k}={v}") })
                    .collect();
                write!(f, "({})", redacted.join(", "))
            }
            ProtocolEvent::Response(_, r, _) => write!(f, "({r})"),
        }
    }
}

/// Request fields whose values must never be logged or echoed.
pub fn is_sensitive(field: &str) -> bool {
    matches!(field, "pwd" | "oldpwd" | "newpwd" | "key")
}

/// The state both the credential table and the repository live in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Backend {
    pub table: CredentialTable,
    pub repo: CertificateRepository,
}

impl Backend {
    pub fn new(table: CredentialTable, repo: CertificateRepository) -> Self {
        Backend { table, repo }
    }

    /// Role to use for gating. Users that no longer exist lose admin rights.
    pub fn effective_role(&self, user: &UserId) -> Role {
        self.table.role_of(user).unwrap_or(Role::EndUser)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    Unauthenticated,
    Authenticated { user: UserId, role: Role },
}

/// What a completed request did, for the audit trail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditNote {
    pub op: Operation,
    /// Authenticated user the action is attributed to, if any.
    pub user: Option<UserId>,
    pub report: Report,
    pub detail: String,
    /// The backend changed.
    pub mutated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Event(ProtocolEvent),
    /// The event was not offered in the current state.
    Refused(EventName),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Step {
    pub output: Option<Output>,
    pub audit: Option<AuditNote>,
}

impl Step {
    pub fn is_refusal(&self) -> bool {
        matches!(self.output, Some(Output::Refused(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionMachine {
    phase: Phase,
    pending: Option<Operation>,
    refusals: u64,
}

impl Default for SessionMachine {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionMachine {
    pub fn new() -> Self {
        SessionMachine { phase: Phase::Unauthenticated, pending: None, refusals: 0 }
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn pending(&self) -> Option<Operation> {
        self.pending
    }

    pub fn current_user(&self) -> Option<&UserId> {
        match &self.phase {
            Phase::Authenticated { user, .. } => Some(user),
            Phase::Unauthenticated => None,
        }
    }

    pub fn refusals(&self) -> u64 {
        self.refusals
    }

    /// Operations that may be announced now (ignores any pending request).
    pub fn offered_operations(&self) -> BTreeSet<Operation> {
        match &self.phase {
            Phase::Unauthenticated => BTreeSet::from([Operation::Login]),
            Phase::Authenticated { role: Role::EndUser, .. } => Operation::END_USER.into_iter().collect(),
            Phase::Authenticated { role: Role::Administrator, .. } => {
                Operation::ALL.into_iter().filter(|op| *op != Operation::Login).collect()
            }
        }
    }

    /// Events the machine will engage in next.
    pub fn offered_events(&self) -> BTreeSet<EventName> {
        match self.pending {
            Some(op) => BTreeSet::from([EventName::new(op, EventKind::Request)]),
            None => self.offered_operations().into_iter().map(|op| EventName::new(op, EventKind::Announce)).collect(),
        }
    }

    fn refuse(&mut self, name: EventName) -> Step {
        self.refusals += 1;
        Step { output: Some(Output::Refused(name)), audit: None }
    }

    /// Processes one client event against `backend` at time `now`.
    pub fn step(&mut self, event: &ProtocolEvent, backend: &mut Backend, now: Timestamp) -> Step {
        match event {
            ProtocolEvent::Announce(op) if self.pending.is_none() && self.offered_operations().contains(op) => {
                self.pending = Some(*op);
                Step::default()
            }
            ProtocolEvent::Request(op, args) if self.pending == Some(*op) => {
                self.pending = None;
                let (report, outputs, note) = self.execute(*op, args, backend, now);
                if let Phase::Authenticated { user, role } = &mut self.phase {
                    *role = backend.effective_role(user);
                }
                Step { output: Some(Output::Event(ProtocolEvent::Response(*op, report, outputs))), audit: Some(note) }
            }
            other => self.refuse(other.name()),
        }
    }

    fn execute(
        &mut self,
        op: Operation,
        args: &Args,
        backend: &mut Backend,
        now: Timestamp,
    ) -> (Report, Args, AuditNote) {
        let actor = self.current_user().cloned();
        let mut note =
            AuditNote { op, user: actor.clone(), report: Report::Failure, detail: String::new(), mutated: false };
        let mut outputs = Args::new();

        let report = match Request::parse(op, args) {
            Err(reason) => {
                note.detail = format!("rejected: {reason}");
                Report::Failure
            }
            Ok(req) => {
                let (report, detail) = self.apply(req, actor.as_ref(), backend, now, &mut outputs);
                note.detail = detail;
                report
            }
        };
        note.report = report;
        note.mutated = report.is_success() && op.mutates();
        if op == Operation::Login && report.is_success() {
            note.user = self.current_user().cloned();
        }
        (report, outputs, note)
    }

    fn apply(
        &mut self,
        req: Request,
        actor: Option<&UserId>,
        backend: &mut Backend,
        now: Timestamp,
        outputs: &mut Args,
    ) -> (Report, String) {
        let is_actor = |u: &UserId| actor == Some(u);
        match req {
            Request::Login { username, pwd } => {
                let outcome = backend.table.login(&username, &pwd);
                if outcome.is_success() {
                    let role = backend.effective_role(&username);
                    self.phase = Phase::Authenticated { user: username.clone(), role };
                }
                (outcome.report, format!("username={username}"))
            }
            Request::ChangePassword { username, oldpwd, newpwd } => {
                if !is_actor(&username) {
                    return (Report::Failure, format!("username={username} not session user"));
                }
                (backend.table.change_password(&username, &oldpwd, &newpwd).report, String::new())
            }
            Request::Logout { username } => {
                if !is_actor(&username) {
                    return (Report::Failure, format!("username={username} not session user"));
                }
                self.phase = Phase::Unauthenticated;
                (Report::Success, String::new())
            }
            Request::ResetPassword { username, newpwd } => {
                (backend.table.reset_password(&username, &newpwd).report, format!("target={username}"))
            }
            Request::AddCredential { username, pwd, role } => {
                (backend.table.add_credential(&username, &pwd, role).report, format!("target={username} role={role}"))
            }
            Request::RemoveCredential { username } => {
                (backend.table.remove_credential(&username).report, format!("target={username}"))
            }
            Request::CertAdd { cert, key, project } => {
                let serial = cert.serial;
                let r = backend.repo.add_certificate(&cert, &key, &project);
                (Report::from_bool(r.is_ok()), format!("serial={serial} project={project}"))
            }
            Request::CertRemove { serial } => {
                let r = backend.repo.remove_certificate_by_serial(serial);
                (Report::from_bool(r.is_ok()), format!("serial={serial}"))
            }
            Request::ProxyCreate { project, lifetime } => {
                let user = actor.expect("proxy creation is only offered after login");
                match backend.repo.create_proxy(user, &project, lifetime, now) {
                    Ok(handle) => {
                        outputs.insert("serial".into(), handle.serial.to_string());
                        outputs.insert("not_after".into(), handle.certificate.not_after.to_string());
                        (Report::Success, format!("serial={} project={project}", handle.serial))
                    }
                    Err(e) => (Report::Failure, format!("project={project}: {e}")),
                }
            }
            Request::ProxyRevoke { serial } => {
                let r = backend.repo.revoke_proxy(serial);
                (Report::from_bool(r.is_ok()), format!("serial={serial}"))
            }
            Request::ProxyList => {
                for p in backend.repo.proxies() {
                    outputs.insert(p.serial.to_string(), format!("{} {} {}", p.user, p.issuer, p.not_after));
                }
                (Report::Success, String::new())
            }
        }
    }
}

/// Typed request inputs. Anything that does not parse reports Failure.
enum Request {
    Login { username: UserId, pwd: Secret },
    ChangePassword { username: UserId, oldpwd: Secret, newpwd: Secret },
    ResetPassword { username: UserId, newpwd: Secret },
    AddCredential { username: UserId, pwd: Secret, role: Role },
    RemoveCredential { username: UserId },
    Logout { username: UserId },
    CertAdd { cert: Certificate, key: KeyMaterial, project: Name },
    CertRemove { serial: SerialNb },
    ProxyCreate { project: Name, lifetime: u64 },
    ProxyRevoke { serial: SerialNb },
    ProxyList,
}

struct Fields<'a>(&'a Args);

impl<'a> Fields<'a> {
    fn get(&self, k: &str) -> &'a str {
        self.0.get(k).map(String::as_str).expect("field presence checked")
    }
    fn user(&self, k: &str) -> Result<UserId, String> {
        UserId::new(self.get(k)).map_err(|e| format!("{k}: {e}"))
    }
    fn secret(&self, k: &str) -> Result<Secret, String> {
        Secret::new(self.get(k).as_bytes()).map_err(|e| format!("{k}: {e}"))
    }
    fn name(&self, k: &str) -> Result<Name, String> {
        Name::new(self.get(k)).map_err(|e| format!("{k}: {e}"))
    }
    fn number(&self, k: &str) -> Result<u64, String> {
        self.get(k).parse().map_err(|_| format!("{k}: not a number"))
    }
}

impl Request {
    fn parse(op: Operation, args: &Args) -> Result<Request, String> {
        let expected = op.request_fields();
        if args.len() != expected.len() || !expected.iter().all(|f| args.contains_key(*f)) {
            return Err(format!("fields must be exactly {expected:?}"));
        }
        let f = Fields(args);
        Ok(match op {
            Operation::Login => Request::Login { username: f.user("username")?, pwd: f.secret("pwd")? },
            Operation::ChangePassword => Request::ChangePassword {
                username: f.user("username")?,
                oldpwd: f.secret("oldpwd")?,
                newpwd: f.secret("newpwd")?,
            },
            Operation::ResetPassword => {
                Request::ResetPassword { username: f.user("username")?, newpwd: f.secret("newpwd")? }
            }
            Operation::AddCredential => Request::AddCredential {
                username: f.user("username")?,
                pwd: f.secret("pwd")?,
                role: f.get("role").parse().map_err(|e| format!("role: {e}"))?,
            },
            Operation::RemoveCredential => Request::RemoveCredential { username: f.user("username")? },
            Operation::Logout => Request::Logout { username: f.user("username")? },
            Operation::CertAdd => Request::CertAdd {
                cert: Certificate::from_hex(f.get("cert")).map_err(|e| format!("cert: {e}"))?,
                key: KeyMaterial::Private(hex::decode(f.get("key")).map_err(|_| "key: not hex".to_owned())?),
                project: f.name("project")?,
            },
            Operation::CertRemove => Request::CertRemove { serial: SerialNb(f.number("serial")?) },
            Operation::ProxyCreate => {
                Request::ProxyCreate { project: f.name("project")?, lifetime: f.number("lifetime")? }
            }
            Operation::ProxyRevoke => Request::ProxyRevoke { serial: SerialNb(f.number("serial")?) },
            Operation::ProxyList => Request::ProxyList,
        })
    }
}

/// Feeds `trace` through `machine`, collecting every output in order.
pub fn run_session(
    machine: &mut SessionMachine,
    trace: &[ProtocolEvent],
    backend: &mut Backend,
    now: Timestamp,
) -> Vec<Output> {
    trace.iter().filter_map(|e| machine.step(e, backend, now).output).collect()
}
