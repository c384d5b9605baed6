//! Command-line front end: argument parsing, run configuration, and the
//! named replication studies.

pub mod args;
pub mod commands;
pub mod config;
pub mod studies;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;
use pfmcmc::parallel::ExecutionMode;
use pfmcmc::Error;

use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Transform { .. } | Error::UnsupportedVariant { .. } | Error::Ingest { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_RUNTIME,
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: &Command) -> pfmcmc::Result<()> {
    match cmd {
        Command::Simulate(a) => commands::simulate(a),
        Command::Filter(a) => commands::filter(a),
        Command::Sample(a) => commands::sample(a),
        Command::Evidence(a) => commands::evidence(a),
        Command::Diag(a) => commands::diag(a),
        Command::Study(a) => {
            if a.name == "list" {
                for name in studies::STUDIES {
                    println!("{name:<16} {}", studies::study_spec(name)?.description);
                }
                return Ok(());
            }
            let workers = a.workers.unwrap_or_else(ExecutionMode::default_workers);
            let out = a
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("studies").join(&a.name));
            studies::run_study(&a.name, a.scale, a.seed, workers, &out)
        }
    }
}
