//! `mecdl` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 solver failure, 4 file I/O.

mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};
use manifest::RunManifest;

fn execute(mut command: Command) -> CliResult<()> {
    if let Command::Rerun(r) = &command {
        let recorded = RunManifest::read(&r.manifest)?;
        let mut inner = recorded.invocation;
        if matches!(inner, Command::Rerun(_)) {
            return Err(CliError::validation("a manifest cannot record another rerun"));
        }
        if let Some(dir) = &r.output_dir {
            std::fs::create_dir_all(dir)?;
            inner.relocate_outputs(dir);
        }
        return execute(inner);
    }

    command.absolutize()?;
    let start = Instant::now();
    let outcome = match &command {
        Command::Phantom(a) => commands::phantom(a)?,
        Command::Mask(a) => commands::mask(a)?,
        Command::Undersample(a) => commands::undersample(a)?,
        Command::Recon(a) => commands::recon(a)?,
        Command::Eval(a) => commands::eval(a)?,
        Command::Rerun(_) => unreachable!("handled above"),
    };
    let Some(path) = outcome.manifest_path.clone() else {
        return Ok(());
    };
    let manifest = RunManifest {
        command: command.name().to_string(),
        invocation: command,
        resolved: outcome.resolved,
        seeds: outcome.seeds,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        metrics: outcome.metrics,
    };
    manifest.write(&path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
