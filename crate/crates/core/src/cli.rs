//! Command-line client, the local credential wallet, and the `serve`
//! entry point.
//!
//! Exit statuses: 0 when the final operation reports Success, 1 when it
//! reports Failure, 2 for transport, usage and local I/O errors. Passwords
//! never come from argv: they are read from a no-echo prompt, from the
//! file named by `ACD_PASSWORD_FILE` (one password per line, consumed in
//! order), or from the wallet.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};

use clap::{Args as ClapArgs, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Report, Role, Secret, UserId};
use crate::gateway::audit::{tail, verify_audit_chain};
use crate::gateway::server::{Gateway, GatewayConfig, DEFAULT_LISTEN_ADDR};
use crate::gateway::wire::{WireMessage, ERR_REFUSED};
use crate::hashing::HashScheme;
use crate::session::{Args, Operation, ProtocolEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    Error = 2,
}

impl From<Report> for Exit {
    fn from(r: Report) -> Self {
        if r.is_success() {
            Exit::Success
        } else {
            Exit::Failure
        }
    }
}

// ---------------------------------------------------------------------------
// Wallet

#[derive(Debug, Error)]
pub enum WalletError {
    #[error("wallet {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("wallet {path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct WalletFile {
    /// Username to hex-encoded password.
    credentials: BTreeMap<UserId, String>,
}

/// Local map from usernames to passwords, kept in a file only the owner
/// can read. A username has at most one password.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClientWallet {
    credentials: BTreeMap<UserId, Secret>,
}

impl ClientWallet {
    /// Loads the wallet, or an empty one if the file does not exist.
    pub fn load(path: &Path) -> Result<Self, WalletError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(source) => return Err(WalletError::Io { path: path.to_owned(), source }),
        };
        let format = |message: String| WalletError::Format { path: path.to_owned(), message };
        let file: WalletFile = serde_json::from_slice(&bytes).map_err(|e| format(e.to_string()))?;
        let mut credentials = BTreeMap::new();
        for (user, hex_pwd) in file.credentials {
            let bytes = hex::decode(&hex_pwd).map_err(|_| format(format!("password for {user} is not hex")))?;
            let secret = Secret::new(bytes).map_err(|e| format(format!("password for {user}: {e}")))?;
            credentials.insert(user, secret);
        }
        Ok(ClientWallet { credentials })
    }

    pub fn save(&self, path: &Path) -> Result<(), WalletError> {
        let file = WalletFile {
            credentials: self.credentials.iter().map(|(u, s)| (u.clone(), hex::encode(s.expose()))).collect(),
        };
        let io_err = |source| WalletError::Io { path: path.to_owned(), source };
        let mut opts = OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
            opts.mode(0o600);
            if path.exists() {
                fs::set_permissions(path, fs::Permissions::from_mode(0o600)).map_err(io_err)?;
            }
        }
        let mut f = opts.open(path).map_err(io_err)?;
        f.write_all(&serde_json::to_vec_pretty(&file).expect("serializable")).map_err(io_err)?;
        f.sync_all().map_err(io_err)
    }

    /// Stores `secret` for `user`, replacing any previous password.
    pub fn insert(&mut self, user: UserId, secret: Secret) {
        self.credentials.insert(user, secret);
    }

    pub fn remove(&mut self, user: &UserId) -> bool {
        self.credentials.remove(user).is_some()
    }

    pub fn get(&self, user: &UserId) -> Option<&Secret> {
        self.credentials.get(user)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.credentials.keys()
    }

    pub fn len(&self) -> usize {
        self.credentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.credentials.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Passwords

/// Where passwords come from.
pub enum PasswordSource {
    /// No-echo terminal prompt.
    Prompt,
    /// Pre-read lines, consumed front to back.
    Lines(std::collections::VecDeque<String>),
}

impl PasswordSource {
    /// `ACD_PASSWORD_FILE` if set, else the terminal.
    pub fn from_env() -> io::Result<Self> {
        match std::env::var_os("ACD_PASSWORD_FILE") {
            Some(path) => Self::from_file(Path::new(&path)),
            None => Ok(PasswordSource::Prompt),
        }
    }

    pub fn from_file(path: &Path) -> io::Result<Self> {
        Ok(PasswordSource::Lines(fs::read_to_string(path)?.lines().map(str::to_owned).collect()))
    }

    pub fn next(&mut self, prompt: &str) -> io::Result<Secret> {
        let text = match self {
            PasswordSource::Prompt => rpassword::prompt_password(prompt)?,
            PasswordSource::Lines(lines) => lines
                .pop_front()
                .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "password file exhausted"))?,
        };
        Secret::new(text).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))
    }
}

fn secret_text(s: &Secret) -> String {
    String::from_utf8_lossy(s.expose()).into_owned()
}

// ---------------------------------------------------------------------------
// Client

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("server closed the connection")]
    Closed,
    #[error("server refused {0}")]
    Refused(String),
    #[error("server error: {0}")]
    Server(String),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

/// One connection to a gateway, i.e. one session.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    seq: u64,
}

impl Client {
    pub fn connect(addr: &str) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        Ok(Client { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream), seq: 0 })
    }

    /// Sends one raw line and returns the reply line, newline stripped.
    pub fn exchange_line(&mut self, line: &str) -> Result<String, ClientError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(ClientError::Closed);
        }
        Ok(reply.trim_end_matches(['\n', '\r']).to_owned())
    }

    fn exchange(&mut self, event: &ProtocolEvent) -> Result<WireMessage, ClientError> {
        self.seq += 1;
        let line = self.exchange_line(&WireMessage::from_event(event, Some(self.seq)).encode())?;
        let reply = WireMessage::decode(line.as_bytes()).map_err(|_| ClientError::Unexpected(line.clone()))?;
        match reply.error.as_deref() {
            Some(ERR_REFUSED) => Err(ClientError::Refused(reply.event.unwrap_or_default())),
            Some(other) => Err(ClientError::Server(other.to_owned())),
            None if reply.seq == Some(self.seq) => Ok(reply),
            None => Err(ClientError::Unexpected(line)),
        }
    }

    /// Runs one announce/request/response handshake.
    pub fn call<'a>(
        &mut self,
        op: Operation,
        args: impl IntoIterator<Item = (&'a str, String)>,
    ) -> Result<(Report, Args), ClientError> {
        self.exchange(&ProtocolEvent::Announce(op))?;
        let args: Args = args.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        let reply = self.exchange(&ProtocolEvent::Request(op, args))?;
        match reply.to_event() {
            Ok(ProtocolEvent::Response(rop, report, outputs)) if rop == op => Ok((report, outputs)),
            _ => Err(ClientError::Unexpected(reply.encode())),
        }
    }

    pub fn login(&mut self, user: &UserId, pwd: &Secret) -> Result<Report, ClientError> {
        Ok(self.call(Operation::Login, [("username", user.to_string()), ("pwd", secret_text(pwd))])?.0)
    }
}

// ---------------------------------------------------------------------------
// Command grammar

#[derive(Debug, Parser)]
#[command(name = "acd", version, about = "Audited credential delegation gateway and client")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, ClapArgs)]
pub struct Connection {
    /// Gateway address.
    #[arg(long, env = "ACD_SERVER", default_value = DEFAULT_LISTEN_ADDR)]
    pub server: String,
    /// Wallet consulted for passwords before prompting.
    #[arg(long, env = "ACD_WALLET_PATH")]
    pub wallet: Option<PathBuf>,
}

#[derive(Debug, Clone, ClapArgs)]
pub struct Session {
    #[command(flatten)]
    pub conn: Connection,
    /// User to log in as before running the command.
    #[arg(long = "as", value_name = "USER", env = "ACD_USER")]
    pub user: String,
}

#[derive(Debug, Clone, ClapArgs)]
pub struct ServeArgs {
    #[arg(long, env = "ACD_LISTEN_ADDR", default_value = DEFAULT_LISTEN_ADDR)]
    pub listen: String,
    #[arg(long, env = "ACD_STORE_PATH", default_value = "acd-store.json")]
    pub store: PathBuf,
    #[arg(long, env = "ACD_AUDIT_PATH", default_value = "acd-audit.log")]
    pub audit: PathBuf,
    /// md5-compat or strong-kdf; applies when a new store is created.
    #[arg(long, env = "ACD_HASH_SCHEME", default_value = "strong-kdf")]
    pub hash_scheme: String,
    /// Replace the store with the four-user fixture.
    #[arg(long)]
    pub init_fixture: bool,
    #[arg(long, env = "ACD_FAULT_KILL_AFTER_AUDIT", hide = true, value_parser = clap::builder::FalseyValueParser::new())]
    pub kill_after_audit: bool,
    /// Fixed clock reading in UTC seconds.
    #[arg(long, hide = true)]
    pub clock: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the gateway.
    Serve(ServeArgs),
    /// Log in; with --interactive, keep the session open for more commands.
    Login {
        username: String,
        #[command(flatten)]
        conn: Connection,
        #[arg(long, short)]
        interactive: bool,
    },
    /// Change your own password.
    Passwd {
        #[command(flatten)]
        session: Session,
    },
    /// Log in and out again.
    Logout {
        #[command(flatten)]
        session: Session,
    },
    /// Administrator operations on the credential table.
    Admin {
        #[command(flatten)]
        session: Session,
        #[command(subcommand)]
        cmd: AdminCmd,
    },
    /// Administrator operations on held certificates.
    Cert {
        #[command(flatten)]
        session: Session,
        #[command(subcommand)]
        cmd: CertCmd,
    },
    /// Proxy certificate issuance and revocation.
    Proxy {
        #[command(flatten)]
        session: Session,
        #[command(subcommand)]
        cmd: ProxyCmd,
    },
    /// Inspect a local audit log.
    Audit {
        #[arg(long, env = "ACD_AUDIT_PATH", default_value = "acd-audit.log")]
        path: PathBuf,
        #[command(subcommand)]
        cmd: AuditCmd,
    },
    /// Manage the local credential wallet.
    Wallet {
        #[arg(long, env = "ACD_WALLET_PATH")]
        path: PathBuf,
        #[command(subcommand)]
        cmd: WalletCmd,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum AdminCmd {
    AddUser {
        username: String,
        #[arg(long, default_value = "EndUser")]
        role: String,
    },
    RemoveUser {
        username: String,
    },
    ResetPassword {
        username: String,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum CertCmd {
    /// Add a certificate (hex file) and its private key (hex file) for a project.
    Add {
        cert: PathBuf,
        key: PathBuf,
        project: String,
    },
    Remove {
        serial: u64,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum ProxyCmd {
    Create {
        project: String,
        #[arg(long, default_value_t = 3600)]
        lifetime: u64,
    },
    Revoke {
        serial: u64,
    },
    List,
}

#[derive(Debug, Clone, Subcommand)]
pub enum AuditCmd {
    /// Check the hash chain; prints the first bad record on failure
    Verify,
    /// Print the last records
    Tail {
        #[arg(short, default_value_t = 10)]
        n: usize,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum WalletCmd {
    /// Store a password for a user, read from the prompt
    Add { username: String },
    Remove { username: String },
    /// Print stored usernames
    List,
}

/// Commands accepted inside an interactive session.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "acd>",
    no_binary_name = true,
    disable_help_flag = true,
    disable_version_flag = true,
    disable_help_subcommand = true
)]
enum ReplCmd {
    Passwd,
    Logout,
    #[command(subcommand)]
    Admin(AdminCmd),
    #[command(subcommand)]
    Cert(CertCmd),
    #[command(subcommand)]
    Proxy(ProxyCmd),
    Help,
    Quit,
}

// ---------------------------------------------------------------------------
// Execution

/// Everything a command may read from or write to.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub input: &'a mut dyn BufRead,
    pub passwords: PasswordSource,
}

/// What an authenticated operation needs.
enum SessionOp {
    Passwd,
    Logout,
    Admin(AdminCmd),
    Cert(CertCmd),
    Proxy(ProxyCmd),
}

enum Failed {
    Usage(String),
    Client(ClientError),
}

impl From<ClientError> for Failed {
    fn from(e: ClientError) -> Self {
        Failed::Client(e)
    }
}

impl From<io::Error> for Failed {
    fn from(e: io::Error) -> Self {
        Failed::Client(ClientError::Io(e))
    }
}

fn user_id(s: &str) -> Result<UserId, Failed> {
    UserId::new(s).map_err(|e| Failed::Usage(format!("username: {e}")))
}

fn read_hex_file(path: &Path) -> Result<String, Failed> {
    let text = fs::read_to_string(path).map_err(|e| Failed::Usage(format!("{}: {e}", path.display())))?;
    Ok(text.trim().to_owned())
}

struct Ctx<'a, 'b> {
    io: &'a mut Io<'b>,
    wallet: Option<ClientWallet>,
}

impl Ctx<'_, '_> {
    fn password_for(&mut self, user: &UserId) -> io::Result<Secret> {
        if let Some(s) = self.wallet.as_ref().and_then(|w| w.get(user)) {
            return Ok(s.clone());
        }
        self.io.passwords.next(&format!("password for {user}: "))
    }

    fn report(&mut self, report: Report) -> io::Result<Exit> {
        writeln!(self.io.out, "{report}")?;
        Ok(report.into())
    }

    fn change_password(&mut self, c: &mut Client, user: &UserId, pwd: &mut Secret) -> Result<Exit, Failed> {
        let new = self.io.passwords.next("new password: ")?;
        let (report, _) = c.call(
            Operation::ChangePassword,
            [("username", user.to_string()), ("oldpwd", secret_text(pwd)), ("newpwd", secret_text(&new))],
        )?;
        if report.is_success() {
            *pwd = new;
        }
        Ok(self.report(report)?)
    }

    fn session_op(&mut self, c: &mut Client, user: &UserId, login_pwd: &Secret, op: SessionOp) -> Result<Exit, Failed> {
        let (report, outputs) = match op {
            SessionOp::Passwd => return self.change_password(c, user, &mut login_pwd.clone()),
            SessionOp::Logout => c.call(Operation::Logout, [("username", user.to_string())])?,
            SessionOp::Admin(AdminCmd::AddUser { username, role }) => {
                let role: Role = role.parse().map_err(|e| Failed::Usage(format!("{e}")))?;
                let pwd = self.io.passwords.next(&format!("password for new user {username}: "))?;
                c.call(
                    Operation::AddCredential,
                    [("username", username), ("pwd", secret_text(&pwd)), ("role", role.to_string())],
                )?
            }
            SessionOp::Admin(AdminCmd::RemoveUser { username }) => {
                c.call(Operation::RemoveCredential, [("username", username)])?
            }
            SessionOp::Admin(AdminCmd::ResetPassword { username }) => {
                let pwd = self.io.passwords.next(&format!("new password for {username}: "))?;
                c.call(Operation::ResetPassword, [("username", username), ("newpwd", secret_text(&pwd))])?
            }
            SessionOp::Cert(CertCmd::Add { cert, key, project }) => c.call(
                Operation::CertAdd,
                [("cert", read_hex_file(&cert)?), ("key", read_hex_file(&key)?), ("project", project)],
            )?,
            SessionOp::Cert(CertCmd::Remove { serial }) => {
                c.call(Operation::CertRemove, [("serial", serial.to_string())])?
            }
            SessionOp::Proxy(ProxyCmd::Create { project, lifetime }) => {
                c.call(Operation::ProxyCreate, [("project", project), ("lifetime", lifetime.to_string())])?
            }
            SessionOp::Proxy(ProxyCmd::Revoke { serial }) => {
                c.call(Operation::ProxyRevoke, [("serial", serial.to_string())])?
            }
            SessionOp::Proxy(ProxyCmd::List) => c.call(Operation::ProxyList, [])?,
        };
        writeln!(self.io.out, "{report}")?;
        for (k, v) in &outputs {
            writeln!(self.io.out, "{k} {v}")?;
        }
        Ok(report.into())
    }

    /// Connects and logs in. `Ok(Err(exit))` means the login itself failed.
    fn open(&mut self, conn: &Connection, user: &UserId) -> Result<Result<(Client, Secret), Exit>, Failed> {
        let mut client = Client::connect(&conn.server)?;
        let pwd = self.password_for(user)?;
        match client.login(user, &pwd)? {
            Report::Success => Ok(Ok((client, pwd))),
            Report::Failure => {
                writeln!(self.io.err, "login as {user} failed")?;
                Ok(Err(self.report(Report::Failure)?))
            }
        }
    }

    fn one_shot(&mut self, session: Session, op: SessionOp) -> Result<Exit, Failed> {
        let user = user_id(&session.user)?;
        match self.open(&session.conn, &user)? {
            Ok((mut client, pwd)) => self.session_op(&mut client, &user, &pwd, op),
            Err(exit) => Ok(exit),
        }
    }

    fn login(&mut self, username: &str, conn: Connection, interactive: bool) -> Result<Exit, Failed> {
        let user = user_id(username)?;
        let (mut client, mut pwd) = match self.open(&conn, &user)? {
            Ok(c) => c,
            Err(exit) => return Ok(exit),
        };
        let exit = self.report(Report::Success)?;
        if !interactive {
            return Ok(exit);
        }
        let mut last = exit;
        loop {
            write!(self.io.err, "acd> ")?;
            self.io.err.flush()?;
            let mut line = String::new();
            if self.io.input.read_line(&mut line)? == 0 {
                return Ok(last);
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.is_empty() {
                continue;
            }
            let cmd = match ReplCmd::try_parse_from(&words) {
                Ok(c) => c,
                Err(e) => {
                    writeln!(self.io.err, "{}", e.render())?;
                    continue;
                }
            };
            let op = match cmd {
                ReplCmd::Quit => return Ok(last),
                ReplCmd::Help => {
                    writeln!(self.io.err, "commands: passwd, logout, admin ..., cert ..., proxy ..., quit")?;
                    continue;
                }
                ReplCmd::Passwd => SessionOp::Passwd,
                ReplCmd::Logout => SessionOp::Logout,
                ReplCmd::Admin(a) => SessionOp::Admin(a),
                ReplCmd::Cert(c) => SessionOp::Cert(c),
                ReplCmd::Proxy(p) => SessionOp::Proxy(p),
            };
            let is_logout = matches!(op, SessionOp::Logout);
            let result = match op {
                // Track the new password so a second change in the same session works.
                SessionOp::Passwd => self.change_password(&mut client, &user, &mut pwd),
                op => self.session_op(&mut client, &user, &pwd, op),
            };
            match result {
                Ok(exit) => last = exit,
                Err(Failed::Usage(msg)) => {
                    writeln!(self.io.err, "{msg}")?;
                    last = Exit::Error;
                }
                Err(Failed::Client(ClientError::Refused(ev))) => {
                    writeln!(self.io.err, "not available in this session: {ev}")?;
                    last = Exit::Failure;
                }
                Err(e) => return Err(e),
            }
            if is_logout && last == Exit::Success {
                return Ok(last);
            }
        }
    }
}

fn serve(args: ServeArgs, err: &mut dyn Write) -> Exit {
    let scheme = match HashScheme::from_name(&args.hash_scheme) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return Exit::Error;
        }
    };
    let config = GatewayConfig {
        listen: args.listen,
        store_path: args.store,
        audit_path: args.audit,
        scheme,
        init_fixture: args.init_fixture,
        kill_after_audit: args.kill_after_audit,
        clock: args.clock,
    };
    let started = Gateway::open(config).and_then(|gw| Ok((gw.bind()?, gw)));
    match started {
        Ok((listener, gw)) => {
            let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(err, "acd gateway listening on {addr}");
            match gw.serve(listener) {
                Ok(()) => Exit::Success,
                Err(e) => {
                    let _ = writeln!(err, "{e}");
                    Exit::Error
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "refusing to start: {e}");
            Exit::Error
        }
    }
}

fn audit(path: &Path, cmd: AuditCmd, io: &mut Io<'_>) -> io::Result<Exit> {
    match cmd {
        AuditCmd::Verify => match verify_audit_chain(path) {
            Ok(s) if s.ok => {
                writeln!(io.out, "ok, {} records", s.count)?;
                Ok(Exit::Success)
            }
            Ok(s) => {
                let bad = s.first_bad.unwrap_or_default();
                writeln!(io.out, "corrupt at record {bad}, {} records", s.count)?;
                Ok(Exit::Failure)
            }
            Err(e) => {
                writeln!(io.err, "{e}")?;
                Ok(Exit::Error)
            }
        },
        AuditCmd::Tail { n } => match tail(path, n) {
            Ok(lines) => {
                for l in lines {
                    writeln!(io.out, "{l}")?;
                }
                Ok(Exit::Success)
            }
            Err(e) => {
                writeln!(io.err, "{e}")?;
                Ok(Exit::Error)
            }
        },
    }
}

fn wallet(path: &Path, cmd: WalletCmd, io: &mut Io<'_>) -> Result<Exit, Failed> {
    let mut w = ClientWallet::load(path).map_err(|e| Failed::Usage(e.to_string()))?;
    match cmd {
        WalletCmd::Add { username } => {
            let user = user_id(&username)?;
            let pwd = io.passwords.next(&format!("password for {user}: "))?;
            w.insert(user, pwd);
        }
        WalletCmd::Remove { username } => {
            if !w.remove(&user_id(&username)?) {
                writeln!(io.err, "{username} is not in the wallet")?;
                return Ok(Exit::Failure);
            }
        }
        WalletCmd::List => {
            for u in w.users() {
                writeln!(io.out, "{u}")?;
            }
            return Ok(Exit::Success);
        }
    }
    w.save(path).map_err(|e| Failed::Usage(e.to_string()))?;
    Ok(Exit::Success)
}

fn load_wallet(conn: &Connection) -> Result<Option<ClientWallet>, Failed> {
    conn.wallet.as_deref().map(ClientWallet::load).transpose().map_err(|e| Failed::Usage(e.to_string()))
}

/// Runs one parsed command line.
pub fn run(cli: Cli, io: &mut Io<'_>) -> Exit {
    let result = match cli.command {
        Command::Serve(args) => return serve(args, io.err),
        Command::Audit { path, cmd } => audit(&path, cmd, io).map_err(Failed::from),
        Command::Wallet { path, cmd } => wallet(&path, cmd, io),
        Command::Login { username, conn, interactive } => {
            load_wallet(&conn).and_then(|wallet| Ctx { io, wallet }.login(&username, conn, interactive))
        }
        Command::Passwd { session } => with_session(io, session, SessionOp::Passwd),
        Command::Logout { session } => with_session(io, session, SessionOp::Logout),
        Command::Admin { session, cmd } => with_session(io, session, SessionOp::Admin(cmd)),
        Command::Cert { session, cmd } => with_session(io, session, SessionOp::Cert(cmd)),
        Command::Proxy { session, cmd } => with_session(io, session, SessionOp::Proxy(cmd)),
    };
    match result {
        Ok(exit) => exit,
        Err(Failed::Usage(msg)) => {
            let _ = writeln!(io.err, "{msg}");
            Exit::Error
        }
        Err(Failed::Client(ClientError::Refused(ev))) => {
            let _ = writeln!(io.err, "server refused {ev}");
            Exit::Failure
        }
        Err(Failed::Client(e)) => {
            let _ = writeln!(io.err, "{e}");
            Exit::Error
        }
    }
}

fn with_session(io: &mut Io<'_>, session: Session, op: SessionOp) -> Result<Exit, Failed> {
    let wallet = load_wallet(&session.conn)?;
    Ctx { io, wallet }.one_shot(session, op)
}
