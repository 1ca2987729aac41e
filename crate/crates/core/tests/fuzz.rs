mod common;

use acd::gateway::{Gateway, GatewayConfig};
use acd::local_auth::init_fixture;
use acd::repository::CertificateRepository;
use acd::session::{Backend, Operation};
use common::fuzz::*;
use common::*;
use proptest::prelude::*;

fn fixture_with_cert() -> Backend {
    let pool = CertPool::new();
    let mut b = Backend::new(init_fixture(), CertificateRepository::new());
    apply_repo(&mut b.repo, &pool, &RepoOp::Add { cert: 0, right_key: true, project: 0 });
    apply_repo(&mut b.repo, &pool, &RepoOp::CreateProxy { user: 3, project: 0, lifetime: 60, skew: 0 });
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn operations_are_total(case in raw_case()) {
        let b = fixture_with_cert();
        prop_assert_eq!(totalization_case(&b.table, &b.repo, &case), Ok(()));
    }

    #[test]
    fn session_requests_are_total(
        op in prop::sample::select(Operation::ALL.to_vec()),
        values in prop::collection::vec(any::<String>(), 1..4),
        extra in prop::bool::weighted(0.1),
    ) {
        prop_assert_eq!(session_case(&fixture_with_cert(), op, &values, extra), Ok(()));
    }
}

#[test]
fn wire_never_emits_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GatewayConfig::new(dir.path().join("store.json"), dir.path().join("audit.log"));
    cfg.init_fixture = true;
    cfg.clock = Some(NOW);
    let gw = Gateway::open(cfg).unwrap();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(1000));
    runner
        .run(&wire_input(), |input| {
            prop_assert_eq!(wire_case(&gw, &input), Ok(()));
            Ok(())
        })
        .unwrap();
    assert!(acd::gateway::verify_audit_chain(&dir.path().join("audit.log")).unwrap().ok);
}
