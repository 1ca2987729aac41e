//! Digests of one password under both schemes, with and without salt.

use acd::domain::{Salt, Secret};
use acd::hashing::{encrypt, generate_salt, HashScheme, KdfCost};

fn main() {
    let pwd = Secret::new("pwdx").unwrap();
    let schemes = [HashScheme::Md5Compat, HashScheme::StrongKdf(KdfCost::LIGHT), HashScheme::strong()];
    let salt = generate_salt();
    println!("fresh salt: {}", salt.to_hex());
    for scheme in schemes {
        let unsalted = encrypt(scheme, &Salt::default(), &pwd);
        let salted = encrypt(scheme, &salt, &pwd);
        println!("{scheme:?} ({} bytes)", scheme.output_len());
        println!("  unsalted {}", unsalted.to_hex());
        println!("  salted   {}", salted.to_hex());
    }
}
