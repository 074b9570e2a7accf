//! The `eyeball` command: `generate` datasets, `run` strategies against a
//! model backend and `report` the results.
//!
//! Exit codes: 0 success, 1 usage error, 2 harness fault.

pub mod args;
pub mod config;
pub mod manifest;
pub mod optima;
pub mod run;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::Parser;
use eyeball_core::instances::{generate_dataset, save_dataset, DEFAULT_PER_SIZE_COUNT, DEFAULT_SIZES};
use eyeball_core::metrics::{emit_report, summarize};

use crate::args::{Cli, Command, GenerateArgs, ReportArgs};

pub const DEFAULT_DATASET_FILE: &str = "dataset.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Fault(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Fault(_) => 2,
        }
    }
}

/// Writes the dataset and its optima; returns both paths.
pub fn cmd_generate(args: GenerateArgs) -> Result<(PathBuf, PathBuf), CliError> {
    let file = config::load(args.config.as_deref())?.generate;
    let sizes = args.sizes.or(file.sizes).unwrap_or_else(|| DEFAULT_SIZES.to_vec());
    let count = args.count.or(file.count).unwrap_or(DEFAULT_PER_SIZE_COUNT);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let output = args.output.or(file.output).unwrap_or_else(|| DEFAULT_DATASET_FILE.into());
    let dataset = generate_dataset(&sizes, count, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Fault(format!("cannot create {}: {e}", parent.display())))?;
    }
    save_dataset(&dataset, &output).map_err(|e| CliError::Fault(e.to_string()))?;
    let solved = optima::solve_all(&dataset)?;
    let optima_path = optima::optima_path(&output);
    optima::save(&solved, &optima_path)?;
    Ok((output, optima_path))
}

pub fn cmd_run(args: args::RunArgs) -> Result<PathBuf, CliError> {
    let file = config::load(args.config.as_deref())?.run;
    let settings = run::RunSettings::resolve(args, file)?;
    run::execute(&settings)
}

/// Writes `<run>/report/` and returns its path.
pub fn cmd_report(args: ReportArgs) -> Result<PathBuf, CliError> {
    let run_dir = args.run_dir;
    if !run_dir.is_dir() {
        return Err(CliError::Usage(format!("run directory {} not found", run_dir.display())));
    }
    let records = run::load_records(&run_dir)?;
    let stats = summarize(&records);
    let out = run_dir.join("report");
    let images = run_dir.join("images");
    emit_report(&stats, &records, &out, images.is_dir().then_some(images.as_path()))
        .map_err(|e| CliError::Fault(e.to_string()))?;
    Ok(out)
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|(d, o)| {
            println!("{}\n{}", d.display(), o.display());
        }),
        Command::Run(a) => cmd_run(*a).map(|dir| println!("{}", dir.display())),
        Command::Report(a) => cmd_report(a).map(|dir| println!("{}", dir.display())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
