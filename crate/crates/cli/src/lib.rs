//! Command-line front end for balance-lab: `test`, `simulate` and
//! `diagnose` subcommands, report rendering, and run manifests.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod report;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;
pub use error::CliError;

/// Parses `argv` and runs the selected command; returns the process exit
/// code (0 computed, 2 usage or validation error, 3 numerical failure).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let outcome = match &cli.command {
        args::Command::Test(a) => commands::cmd_test(a).map(|_| ()),
        args::Command::Simulate(a) => commands::cmd_simulate(a).map(|_| ()),
        args::Command::Diagnose(a) => commands::cmd_diagnose(a).map(|_| ()),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
