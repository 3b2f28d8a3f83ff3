//! `specdet` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 missing
//! capability, 4 internal error.

use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod verdict;

use args::Cli;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Capability(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Capability(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Capability(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<specdet_core::Error> for Failure {
    fn from(e: specdet_core::Error) -> Self {
        use specdet_core::Error;
        match e {
            Error::Capability { .. } => Failure::Capability(e.to_string()),
            Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    // A second initialization (in tests) keeps the first logger.
    let _ = env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info })
        .format_timestamp(None)
        .format_target(false)
        .parse_env("SPECDET_LOG")
        .try_init();

    let outcome = std::panic::catch_unwind(|| commands::run(&cli))
        .unwrap_or_else(|_| Err(Failure::Internal("internal error (panic)".into())));
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("specdet: error: {}", f.message());
            f.code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
