use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match linkforge_cli::run(linkforge_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
