mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use acd::domain::{SerialNb, SubjectDN, UserId};
use acd::gateway::{audit, store, verify_audit_chain};
use acd::repository::{generate_key_pair, Certificate};
use common::GatewayProcess;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

/// Runs the `acd` binary with passwords fed from a file.
fn acd(dir: &Path, server: &str, args: &[&str], passwords: &[&str], stdin: &str) -> Run {
    let pw_file = dir.join(format!("pw-{}", rand_suffix()));
    std::fs::write(&pw_file, passwords.join("\n")).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_acd"))
        .args(args)
        .env("ACD_SERVER", server)
        .env("ACD_PASSWORD_FILE", &pw_file)
        .env("ACD_AUDIT_PATH", dir.join("audit.log"))
        .env("RUST_LOG", "off")
        .env_remove("ACD_WALLET_PATH")
        .env_remove("ACD_USER")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn rand_suffix() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static N: AtomicU64 = AtomicU64::new(0);
    N.fetch_add(1, Ordering::Relaxed)
}

fn fixture_server(dir: &Path) -> GatewayProcess {
    GatewayProcess::start(dir, &["--init-fixture"], &[])
}

#[test]
fn login_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let gw = fixture_server(dir.path());
    let ok = acd(dir.path(), &gw.addr, &["login", "ali"], &["pwdx"], "");
    assert_eq!((ok.code, ok.stdout.as_str()), (0, "Success\n"), "{}", ok.stderr);
    let bad = acd(dir.path(), &gw.addr, &["login", "ali"], &["wrongpw"], "");
    assert_eq!((bad.code, bad.stdout.as_str()), (1, "Failure\n"));
    drop(gw);

    let down = acd(dir.path(), "127.0.0.1:1", &["login", "ali"], &["pwdx"], "");
    assert_eq!(down.code, 2);
    assert!(down.stdout.is_empty());
    let usage = acd(dir.path(), "127.0.0.1:1", &["login"], &[], "");
    assert_eq!(usage.code, 2);
}

#[test]
fn admin_adds_user_who_then_logs_in() {
    let dir = tempfile::tempdir().unwrap();
    let gw = fixture_server(dir.path());
    let add = acd(dir.path(), &gw.addr, &["admin", "--as", "root", "add-user", "zoe"], &["rootpw", "zoepw"], "");
    assert_eq!((add.code, add.stdout.as_str()), (0, "Success\n"), "{}", add.stderr);
    let login = acd(dir.path(), &gw.addr, &["login", "zoe"], &["zoepw"], "");
    assert_eq!(login.code, 0);

    let gated = acd(dir.path(), &gw.addr, &["admin", "--as", "ali", "reset-password", "mark"], &["pwdx", "x"], "");
    assert_eq!(gated.code, 1);
    assert!(gated.stdout.contains("Failure") || gated.stderr.contains("refused"), "{gated:?}", gated = gated.stderr);

    let verify = acd(dir.path(), &gw.addr, &["audit", "verify"], &[], "");
    assert_eq!(verify.code, 0);
    assert!(verify.stdout.starts_with("ok, "), "{}", verify.stdout);

    for run in [&add, &login, &gated] {
        for secret in ["rootpw", "zoepw", "pwdx"] {
            assert!(!run.stdout.contains(secret));
        }
    }
}

#[test]
fn interactive_session() {
    let dir = tempfile::tempdir().unwrap();
    let gw = fixture_server(dir.path());
    let script = "admin add-user bob --role Administrator\nproxy list\npasswd\nbogus\nlogout\n";
    let run = acd(dir.path(), &gw.addr, &["login", "root", "--interactive"], &["rootpw", "bobpw", "newroot"], script);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.stdout, "Success\nSuccess\nSuccess\nSuccess\nSuccess\n");
    assert_eq!(acd(dir.path(), &gw.addr, &["login", "root"], &["newroot"], "").code, 0);
    assert_eq!(acd(dir.path(), &gw.addr, &["login", "bob"], &["bobpw"], "").code, 0);
}

#[test]
fn proxy_attribution_matches_audit() {
    let dir = tempfile::tempdir().unwrap();
    let gw = fixture_server(dir.path());
    let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap().as_secs();
    let (public, private) = generate_key_pair();
    let cert = Certificate::self_signed(
        SerialNb(100),
        SubjectDN::new("/O=Grid/CN=atlas").unwrap(),
        now - 10,
        now + 86_400,
        &public,
        &private,
    )
    .unwrap();
    std::fs::write(dir.path().join("cert.hex"), cert.to_hex()).unwrap();
    std::fs::write(dir.path().join("key.hex"), hex::encode(private.bytes())).unwrap();

    let cert_file = dir.path().join("cert.hex");
    let key_file = dir.path().join("key.hex");
    let add = acd(
        dir.path(),
        &gw.addr,
        &["cert", "--as", "root", "add", cert_file.to_str().unwrap(), key_file.to_str().unwrap(), "atlas"],
        &["rootpw"],
        "",
    );
    assert_eq!(add.code, 0, "{}", add.stderr);
    let create =
        acd(dir.path(), &gw.addr, &["proxy", "--as", "root", "create", "atlas", "--lifetime", "600"], &["rootpw"], "");
    assert_eq!(create.code, 0, "{}", create.stderr);
    assert!(create.stdout.starts_with("Success\n"));
    assert!(!create.stdout.contains(&hex::encode(private.bytes())));
    let serial: u64 = create.stdout.lines().find_map(|l| l.strip_prefix("serial ")).unwrap().parse().unwrap();

    let list = acd(dir.path(), &gw.addr, &["proxy", "--as", "root", "list"], &["rootpw"], "");
    assert!(list.stdout.contains(&format!("{serial} root 100")), "{}", list.stdout);

    let backend = store::load(&dir.path().join("store.json")).unwrap();
    let holder = &backend.repo.user_proxy()[&SerialNb(serial)];
    let records: Vec<audit::AuditRecord> = audit::tail(&dir.path().join("audit.log"), 1000)
        .unwrap()
        .iter()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let rec = records.iter().find(|r| r.event == "ProxyCreate" && r.outcome.is_success()).unwrap();
    assert_eq!(UserId::new(rec.user.as_str()).unwrap(), *holder);
    assert!(rec.detail.contains(&format!("serial={serial}")));
}

#[test]
fn crash_between_audit_and_reply() {
    let dir = tempfile::tempdir().unwrap();
    let gw = GatewayProcess::start(dir.path(), &["--init-fixture"], &[("ACD_FAULT_KILL_AFTER_AUDIT", "true")]);
    let run = acd(dir.path(), &gw.addr, &["admin", "--as", "root", "add-user", "zoe"], &["rootpw", "zoepw"], "");
    assert_eq!(run.code, 2, "no reply means a transport error: {run:?}", run = run.stdout);
    drop(gw);

    let backend = store::load(&dir.path().join("store.json")).expect("store loads after the crash");
    assert!(backend.table.contains(&UserId::new("zoe").unwrap()));
    let chain = verify_audit_chain(&dir.path().join("audit.log")).unwrap();
    assert!(chain.ok);
    assert_eq!(chain.count, 2);

    let gw = GatewayProcess::start(dir.path(), &[], &[]);
    assert_eq!(acd(dir.path(), &gw.addr, &["login", "zoe"], &["zoepw"], "").code, 0);
}

#[test]
fn wallet_supplies_passwords() {
    let dir = tempfile::tempdir().unwrap();
    let gw = fixture_server(dir.path());
    let wallet = dir.path().join("wallet.json");
    let w = wallet.to_str().unwrap();
    assert_eq!(acd(dir.path(), &gw.addr, &["wallet", "--path", w, "add", "mark"], &["mrk3000"], "").code, 0);
    let list = acd(dir.path(), &gw.addr, &["wallet", "--path", w, "list"], &[], "");
    assert_eq!(list.stdout, "mark\n");
    let login = acd(dir.path(), &gw.addr, &["login", "mark", "--wallet", w], &[], "");
    assert_eq!(login.code, 0, "{}", login.stderr);
}
