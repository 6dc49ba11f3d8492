//! `wbsrc`: design, process, respond, simulate and verify runs for the
//! wideband sample-rate converter.
//!
//! Exit status: 0 success, 1 runtime failure, 2 usage, 3 I/O or malformed
//! input, 4 design infeasible, 5 verification failure.

use std::process::ExitCode;

use clap::CommandFactory;

mod commands;
mod config;
mod error;
mod verify;

fn main() -> ExitCode {
    let matches = config::Cli::command().get_matches();
    let result = config::resolve(&matches).and_then(|run| commands::execute(&run));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wbsrc: {e}");
            e.exit_code()
        }
    }
}
