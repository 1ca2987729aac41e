//! Drives the session state machine through a login, a refused
//! administrator request, a password change and a logout.

use acd::local_auth::init_fixture;
use acd::repository::CertificateRepository;
use acd::session::{Backend, Operation, Output, ProtocolEvent, SessionMachine};

fn main() {
    let mut backend = Backend::new(init_fixture(), CertificateRepository::new());
    let mut m = SessionMachine::new();
    let trace = [
        ProtocolEvent::Announce(Operation::Login),
        ProtocolEvent::request(Operation::Login, [("username", "ali"), ("pwd", "pwdx")]),
        ProtocolEvent::Announce(Operation::AddCredential),
        ProtocolEvent::Announce(Operation::ChangePassword),
        ProtocolEvent::request(
            Operation::ChangePassword,
            [("username", "ali"), ("oldpwd", "pwdx"), ("newpwd", "s3cret")],
        ),
        ProtocolEvent::Announce(Operation::Logout),
        ProtocolEvent::request(Operation::Logout, [("username", "ali")]),
    ];
    for event in &trace {
        let offered: Vec<String> = m.offered_events().iter().map(ToString::to_string).collect();
        let step = m.step(event, &mut backend, 0);
        let result = match step.output {
            None => "accepted".to_owned(),
            Some(Output::Event(e)) => e.to_string(),
            Some(Output::Refused(name)) => format!("refused {name}"),
        };
        println!("{:<58} {result:<34} offered before: {}", event.to_string(), offered.join(" "));
    }
    println!("refusals: {}", m.refusals());
}
