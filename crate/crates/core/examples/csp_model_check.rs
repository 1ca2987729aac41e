//! Runs the process model: the client/server composition, and trace
//! conformance between the model and the session machine.

use acd::harness::acd::{acd_environment, check_conformance, client1, full_alphabet, server};
use acd::harness::{compose, maximal, Domain};
use acd::local_auth::init_fixture;
use acd::repository::CertificateRepository;
use acd::session::Backend;

const NOW: u64 = 1_700_000_000;

fn main() {
    let env = acd_environment(NOW).unwrap();
    let backend = Backend::new(init_fixture(), CertificateRepository::new());
    let d = |vs: &[&str]| vs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let domain = Domain::from([
        ("username".into(), d(&["ali", "root"])),
        ("pwd".into(), d(&["pwdx", "rootpw", "bad"])),
        ("oldpwd".into(), d(&["pwdx"])),
        ("newpwd".into(), d(&["n1"])),
        ("role".into(), d(&["EndUser"])),
        ("cert".into(), d(&["00"])),
        ("key".into(), d(&["00"])),
        ("project".into(), d(&["atlas"])),
        ("serial".into(), d(&["1"])),
        ("lifetime".into(), d(&["60"])),
        ("report".into(), d(&["Success", "Failure"])),
    ]);

    let system = compose(server(), client1(), full_alphabet());
    let traces = env.enumerate_traces(&system, &backend, &domain, 6).unwrap();
    for t in maximal(&traces) {
        let shown: Vec<String> = t.iter().map(ToString::to_string).collect();
        println!("client1 || server: {}", shown.join(", "));
    }

    for depth in [2, 4, 6] {
        let c = check_conformance(&backend, NOW, &domain, depth).unwrap();
        println!(
            "depth {depth}: {} model traces, {} implementation traces, conforms: {}",
            c.model_traces,
            c.implementation_traces,
            c.holds()
        );
    }
}
