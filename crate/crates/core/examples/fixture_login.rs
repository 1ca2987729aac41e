//! Loads the four-user fixture and tries a few logins.

use acd::domain::{Secret, UserId};
use acd::local_auth::{init_fixture, FIXTURE_USERS};

fn main() {
    let table = init_fixture();
    println!("scheme: {}", table.scheme());
    for (user, digest) in table.pwd_db() {
        println!("{user:>5} {}", digest.to_hex());
    }

    for (user, pwd, _, _) in FIXTURE_USERS {
        let out = table.login(&UserId::new(user).unwrap(), &Secret::new(pwd).unwrap());
        println!("login({user}, {pwd}) -> {}", out.report);
    }
    let out = table.login(&UserId::new("ali").unwrap(), &Secret::new("guess").unwrap());
    println!("login(ali, guess) -> {}", out.report);
}
