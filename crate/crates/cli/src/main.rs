//! `polymix`: mixing, feature extraction, training and evaluation from the
//! command line. Exit status 0 on success, 1 on a pipeline error, 2 on a
//! usage error.

mod args;
mod run;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::Cli;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    if let Some(jobs) = cli.jobs.filter(|&j| j > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let command = match (cli.command, cli.config) {
        (Some(c), _) => c,
        (None, Some(path)) => match run::load_snapshot(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        },
        (None, None) => Cli::command()
            .error(clap::error::ErrorKind::MissingSubcommand, "a subcommand or --config is required")
            .exit(),
    };
    log::debug!("running {}", command.name());
    match run::execute(&command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
