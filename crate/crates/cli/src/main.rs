mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::Cli;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad model, order or option combination.
    #[error("{0}")]
    Usage(String),
    /// Malformed or insufficient input data.
    #[error("{0}")]
    Data(String),
    /// Log-likelihood at the starting parameters is not finite.
    #[error("{0}")]
    Likelihood(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Likelihood(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

const SUBCOMMANDS: [&str; 6] = ["derive", "simulate", "density", "fit", "coverage", "compare"];

/// `--config` is found before parsing, since the file may supply required
/// flags.
fn config_path(argv: &[OsString]) -> Option<(OsString, Option<&str>)> {
    let mut path = None;
    let mut sub = None;
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = it.next().cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else if sub.is_none() {
            sub = SUBCOMMANDS.iter().copied().find(|c| *c == s);
        }
    }
    path.map(|p| (p, sub))
}

fn parse_args() -> Result<Cli, clap::Error> {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let Some((path, Some(sub))) = config_path(&argv) else {
        return Cli::try_parse_from(&argv);
    };
    let entries = config::load(path.as_ref())
        .map_err(|e| clap::Error::raw(clap::error::ErrorKind::ValueValidation, format!("{e}\n")))?;
    Cli::try_parse_from(config::splice(&argv, sub, &entries))
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
