//! `tvgnn` command-line runner: synthetic graph generation, clustering and
//! classification runs with per-seed artifacts, re-scoring and gradient
//! checks.

pub mod classify;
pub mod cli;
pub mod cluster;
pub mod common;
pub mod config;
pub mod error;
pub mod eval;
pub mod gen;
pub mod gradcheck;

use std::ffi::OsString;

use clap::Parser;

pub use error::{CliError, CliResult};

use cli::{Cli, Command};
use config::Settings;

/// Parse `args` (program name first), run the subcommand and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command) -> CliResult<()> {
    let (file, flags) = command.settings_input();
    let settings = Settings::load(file.as_deref(), flags)?;
    match command {
        Command::Gen(_) => gen::run(&settings),
        Command::Cluster(_) => cluster::run(&settings),
        Command::Classify(_) => classify::run(&settings),
        Command::Eval(_) => eval::run(&settings),
        Command::Gradcheck(_) => gradcheck::run(&settings),
    }
}

/// Log level from `TVGNN_LOG` (`quiet`, `info` or `debug`; default `info`).
pub fn init_logging() {
    let level = match std::env::var("TVGNN_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}
