//! `hierstab`: batch front end for the analysis library.
//!
//! Exit status is 0 on success, 2 for invalid parameters or inputs, 3 when
//! exact enumeration would exceed the cap, 4 on numerical failure and 1 when
//! the output cannot be written.

mod args;
mod commands;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use hierstab::product_space::{parse_cap, CAP_ENV};
use hierstab::Error;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Output(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Capacity { .. }) => 3,
            CliError::Core(Error::Numerical { .. }) => 4,
            CliError::Core(_) | CliError::Usage(_) => 2,
            CliError::Output(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "invalid arguments: {m}"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Ok(v) = std::env::var(CAP_ENV) {
        if parse_cap(&v).is_none() {
            return Err(CliError::Usage(format!(
                "{CAP_ENV}={v:?} is not a positive integer or 2^k"
            )));
        }
    }
    let artifact = match &cli.command {
        Command::Analyze(a) => commands::analyze(a)?,
        Command::Hierarchy(a) => commands::hierarchy(a)?,
        Command::Decay(a) => commands::decay(a)?,
        Command::Maxcorr(a) => commands::maxcorr(a)?,
        Command::Es(a) => commands::es(a)?,
        Command::Percolation(a) => commands::percolation(a)?,
        Command::Demo(a) => commands::demo(a)?,
    };
    let text = artifact.render();
    match &cli.command.common().out {
        Some(path) => output::write_atomic(path, &text),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Output(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hierstab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
