mod args;
mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// Bad flag values or combinations that clap cannot catch.
#[derive(Debug)]
pub struct Usage(pub String);

/// The run finished but a numeric check failed (divergence, a failed
/// property, an example that could not be processed).
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}
impl std::error::Error for NumericFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use nattr_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<NumericFailure>() {
            return EXIT_NUMERIC;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. }
                | E::BadMagic { .. }
                | E::Truncated { .. }
                | E::Header(_)
                | E::TrailingBytes { .. }
                | E::CountMismatch { .. }
                | E::BadLabel { .. }
                | E::Json(_) => EXIT_IO,
                E::Diverged { .. } => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            };
        }
    }
    1
}

fn configure_threads() -> anyhow::Result<Option<usize>> {
    let Ok(raw) = std::env::var("NATTR_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Usage(format!(
            "NATTR_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Usage(format!("cannot size worker pool: {e}")))?;
    Ok(Some(n))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = configure_threads()?;
    let echo = commands::Echo {
        version: env!("CARGO_PKG_VERSION"),
        threads,
        command: &cli.command,
    };
    match &cli.command {
        Command::Train(a) => commands::train(a, &echo),
        Command::Attribute(a) => commands::attribute(a, &echo),
        Command::Ablate(a) => commands::ablate(a, &echo),
        Command::Bench(a) => commands::bench(a, &echo),
        Command::Verify(a) => commands::verify(a, &echo),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
