use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod args;
mod bench;
mod config;
mod diag;
mod error;
mod find;
mod patch;
mod pv;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "vortexlab", version, about = "Point-vortex and vortex-patch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a self-similarly expanding three-vortex configuration.
    ConfigFind(find::ConfigFindArgs),
    /// Integrate a point-vortex system and report invariant drift.
    PvRun(pv::PvRunArgs),
    /// Run the vortex-patch simulation.
    PatchRun(patch::PatchRunArgs),
    /// Recompute diagnostics from stored snapshots.
    Diag(diag::DiagArgs),
    /// Time the tree backend against direct summation.
    Bench(bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::validation("usage", e.to_string().trim_end());
            return report(&err);
        }
    };
    let result = match cli.command {
        Command::ConfigFind(a) => find::run(a),
        Command::PvRun(a) => pv::run(a),
        Command::PatchRun(a) => patch::run(a),
        Command::Diag(a) => diag::run(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(err: &CliError) -> ExitCode {
    let mut stderr = std::io::stderr().lock();
    let _ = writeln!(stderr, "{}", err.to_json());
    ExitCode::from(err.exit_code() as u8)
}
