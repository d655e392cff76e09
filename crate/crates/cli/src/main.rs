//! `cfgen`: counterfactual generation for toy token models.

mod args;
mod commands;
mod error;
mod load;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let cap = cfgen_core::EnumCap(cli.enum_cap);
    let result = match cli.command {
        Command::Validate(a) => commands::validate(&a),
        Command::Counterfactual(a) => commands::counterfactual(&a, cap),
        Command::Factual(a) => commands::factual(&a),
        Command::Verify(a) => commands::verify(&a, cap),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Compare(a) => commands::compare(&a, cap),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
