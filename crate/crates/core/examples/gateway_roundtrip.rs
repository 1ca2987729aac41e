//! Serves the fixture on an ephemeral port, talks to it with the line
//! client, and prints the audit trail.

use acd::cli::Client;
use acd::gateway::{audit, Gateway, GatewayConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GatewayConfig::new(dir.path().join("store.json"), dir.path().join("audit.log"));
    cfg.init_fixture = true;
    let gw = Gateway::open(cfg).unwrap();
    let listener = gw.bind().unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || gw.serve(listener));

    let mut c = Client::connect(&addr).unwrap();
    for line in [
        r#"{"event":"Login","seq":1}"#,
        r#"{"event":"LoginRequest","args":{"username":"root","pwd":"rootpw"},"seq":2}"#,
        r#"{"event":"AddCredential","seq":3}"#,
        r#"{"event":"AddCredentialRequest","args":{"username":"zoe","pwd":"zoepw","role":"EndUser"},"seq":4}"#,
        r#"{"event":"CertRemove","seq":5}"#,
        r#"{"event":"LoginRequest","seq":6}"#,
        r#"not json"#,
    ] {
        println!("> {line}");
        println!("< {}", c.exchange_line(line).unwrap());
    }
    drop(c);

    std::thread::sleep(std::time::Duration::from_millis(50));
    for record in audit::tail(&dir.path().join("audit.log"), 10).unwrap() {
        println!("audit {record}");
    }
}
