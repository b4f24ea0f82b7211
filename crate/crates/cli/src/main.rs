//! `ckan` command-line harness.
//!
//! Exit codes: 0 success, 1 configuration error (including bad flags),
//! 2 data error, 3 failed runs.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

fn run(argv: Vec<String>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Profile(a) => commands::profile(a),
        Command::Count(a) => commands::count(a),
        Command::Prune(a) => commands::prune(a),
    };
    match result {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::FailedRuns(n)) => {
            eprintln!("error: {n} run(s) failed");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                ckan::Error::Diverged(_) => 3,
                e if e.is_data_error() => 2,
                _ => 1,
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args().collect()))
}
