use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cutfem_cli::{run_file, CliError, RunOptions};

/// Stabilized cut finite element solver for Oseen and Navier–Stokes flow.
#[derive(Debug, Parser)]
#[command(name = "cutfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output_dir` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
}

/// Applies `CUTFEM_THREADS` to the global thread pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CUTFEM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::config("CUTFEM_THREADS", format!("expected a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, out, quiet } = cli.command;
    let result = configure_threads().and_then(|_| run_file(&config, &RunOptions { out, quiet }));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
