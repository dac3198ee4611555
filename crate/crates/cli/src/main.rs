mod args;
mod commands;
mod failure;

use std::process::ExitCode;

use clap::Parser;

use args::{split_field_flags, Cli, Command};
use failure::Failure;

fn main() -> ExitCode {
    let (argv, fields) = match split_field_flags(std::env::args_os()) {
        Ok(split) => split,
        Err(msg) => return Failure::Usage(msg).report(),
    };
    let cli = Cli::parse_from(argv);
    let result = match cli.command {
        Command::Segment(a) => commands::segment(a, fields),
        Command::Gen(a) if fields.is_empty() => commands::gen(a),
        Command::Eval(a) if fields.is_empty() => commands::eval(a),
        _ => Err(Failure::Usage("--field-<label> is only accepted by `segment`".into())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
