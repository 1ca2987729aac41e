//! Appends a few audit records, verifies the chain, then tampers with one
//! byte and verifies again.

use acd::domain::Report;
use acd::gateway::audit::verify_bytes;
use acd::gateway::{verify_audit_chain, AuditLog};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.log");
    let mut log = AuditLog::open(&path).unwrap();
    log.append(1, "-", "Login", Report::Failure, "username=ali").unwrap();
    log.append(2, "ali", "Login", Report::Success, "username=ali").unwrap();
    log.append(3, "ali", "ChangePassword", Report::Success, "username=ali").unwrap();
    drop(log);

    print!("{}", std::fs::read_to_string(&path).unwrap());
    println!("{:?}", verify_audit_chain(&path).unwrap());

    let mut data = std::fs::read(&path).unwrap();
    let second_line = data.iter().position(|b| *b == b'\n').unwrap() + 10;
    data[second_line] ^= 0x01;
    println!("after flipping byte {second_line}: {:?}", verify_bytes(&data).0);
}
