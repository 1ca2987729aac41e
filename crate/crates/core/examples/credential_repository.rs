//! Registers a project certificate, issues proxies to two users, then
//! revokes one and removes the certificate.

use std::time::{SystemTime, UNIX_EPOCH};

use acd::domain::{Name, SerialNb, SubjectDN, UserId};
use acd::repository::{generate_key_pair, Certificate, CertificateRepository};

fn main() {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_secs();
    let (public, private) = generate_key_pair();
    let cert = Certificate::self_signed(
        SerialNb(1),
        SubjectDN::new("/O=Grid/CN=atlas").unwrap(),
        now - 60,
        now + 30 * 86_400,
        &public,
        &private,
    )
    .unwrap();

    let mut repo = CertificateRepository::new();
    let atlas = Name::new("atlas").unwrap();
    repo.add_certificate(&cert, &private, &atlas).unwrap();
    println!("projects: {:?}", repo.projects_names());

    let mut issued = Vec::new();
    for user in ["ali", "mark"] {
        let handle = repo.create_proxy(&UserId::new(user).unwrap(), &atlas, 3600, now).unwrap();
        assert!(handle.certificate.verify_signature(&cert.public_key()));
        println!("proxy {} for {user}, signed by serial {}", handle.serial, cert.serial);
        issued.push(handle.serial);
    }
    // Same certificate twice is refused.
    println!("re-add: {:?}", repo.add_certificate(&cert, &private, &atlas));

    repo.revoke_proxy(issued[0]).unwrap();
    for p in repo.proxies() {
        println!("active: serial {} user {} until {}", p.serial, p.user, p.not_after);
    }
    repo.remove_certificate(&cert).unwrap();
    println!("after removal: {} certificates, {} proxies", repo.certificates().count(), repo.proxies().len());
    repo.check_invariants().unwrap();
}
