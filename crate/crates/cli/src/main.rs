mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use trix_core::Error;

use args::{Cli, Command};

/// Exit status contract.
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_GUARD: u8 = 2;
pub const EXIT_INCONSISTENT: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Guard { .. } => EXIT_GUARD,
        Error::Inconsistency(_) => EXIT_INCONSISTENT,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", e.render());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Enumerate(a) => commands::enumerate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Qq(a) => commands::qq(a),
        Command::CrossValidate(a) => commands::cross_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
