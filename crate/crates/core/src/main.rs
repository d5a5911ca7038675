use std::process::ExitCode;

use clap::Parser;
use lpcond::cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lpcond: {e}");
            ExitCode::FAILURE
        }
    }
}
