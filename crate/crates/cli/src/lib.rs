//! Command-line front-end for the `efficiency` library.
//!
//! Exit codes: 0 success, 2 usage error, 3 domain error, 1 output failure.

pub mod args;
pub mod commands;
pub mod events;
pub mod grid;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use clap::Parser;

pub use args::Cli;
pub use output::{Cell, Format, Metadata, OutputRecord};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] efficiency::Error),
    #[error("input error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Csv(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// The invocation as recorded in the metadata: `--threads` and `--output` are dropped
/// since they do not affect the values.
pub fn command_line(args: &[OsString]) -> String {
    let mut parts = vec!["efficiency".to_owned()];
    let mut skip_next = false;
    for arg in args.iter().skip(1) {
        let arg = arg.to_string_lossy();
        if skip_next {
            skip_next = false;
            continue;
        }
        if arg == "--threads" || arg == "--output" {
            skip_next = true;
            continue;
        }
        if arg.starts_with("--threads=") || arg.starts_with("--output=") {
            continue;
        }
        let plain = !arg.is_empty() && arg.chars().all(|c| c.is_ascii_alphanumeric() || "-_.:,=/+".contains(c));
        parts.push(if plain { arg.into_owned() } else { format!("'{}'", arg.replace('\'', r"'\''")) });
    }
    parts.join(" ")
}

/// Runs the parsed command on a pool of `cli.common.threads` workers.
pub fn execute(cli: &Cli, command_line: String) -> Result<OutputRecord, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.common.threads)))?;
    let meta = Metadata::new(command_line, cli.common.seed);
    pool.install(|| commands::execute(&cli.command, meta, cli.common.seed))
}

fn emit(cli: &Cli, record: &OutputRecord) -> Result<(), CliError> {
    match &cli.common.output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            record.write(cli.common.format, &mut out)?;
            out.flush()?;
        }
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            record.write(cli.common.format, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs, writes the output and returns the exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli, command_line(&args)).and_then(|rec| emit(&cli, &rec)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
