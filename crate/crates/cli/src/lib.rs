//! Command-line pipeline: corpus generation, labelling, training,
//! distillation, evaluation, level sweeps and runtime benchmarks.

pub mod args;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod label;
pub mod manifest;
pub mod model;
pub mod parallel;
pub mod runs;

use std::path::PathBuf;

use args::Cli;
use runs::{ErrorRecord, ERROR_FILE};

/// Exit status for configuration and runtime failures.
pub const EXIT_FAILURE: i32 = 1;

/// Outcome of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub run_dir: Option<PathBuf>,
}

/// Runs a parsed command line. Errors are printed to stderr as a JSON record
/// and, once a run directory exists, written to `error.json` inside it.
pub fn run(cli: &Cli) -> Outcome {
    let name = cli.command.name();
    let fail = |err: anyhow::Error, dir: Option<PathBuf>| {
        let rec = ErrorRecord::new(name, EXIT_FAILURE, &err);
        let json = serde_json::to_string_pretty(&rec).unwrap_or_else(|_| format!("{err:#}"));
        if let Some(d) = &dir {
            let _ = std::fs::write(d.join(ERROR_FILE), format!("{json}\n"));
        }
        eprintln!("{json}");
        Outcome { exit_code: EXIT_FAILURE, run_dir: dir }
    };
    let cfg = match commands::resolve_config(&cli.global) {
        Ok(c) => c,
        Err(e) => return fail(e.context("invalid configuration"), None),
    };
    let root = runs::run_root(cli.global.out.as_deref());
    match commands::execute(&cli.command, cfg, &root, cli.global.jobs) {
        Err(e) => fail(e, None),
        Ok((run, Err(e))) => fail(e, Some(run.path)),
        Ok((run, Ok(()))) => {
            println!("{}", run.path.display());
            Outcome { exit_code: 0, run_dir: Some(run.path) }
        }
    }
}
