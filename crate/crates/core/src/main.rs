use std::io;
use std::process::ExitCode;

use acd::cli::{run, Cli, Io, PasswordSource};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let passwords = match PasswordSource::from_env() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("ACD_PASSWORD_FILE: {e}");
            return ExitCode::from(2);
        }
    };
    let (mut out, mut err) = (io::stdout().lock(), io::stderr());
    let mut input = io::stdin().lock();
    let mut io = Io { out: &mut out, err: &mut err, input: &mut input, passwords };
    ExitCode::from(run(cli, &mut io) as u8)
}
