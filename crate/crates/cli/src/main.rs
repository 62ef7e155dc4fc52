use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qss_cli::{cmd_run, cmd_sweep, cmd_validate, run, CliError};
use qss_core::validation::GridDensity;

/// Sequential quantum secret sharing simulator.
#[derive(Parser)]
#[command(name = "qss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured session and print a JSON report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate quantities over a parameter grid and write CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for grid evaluation.
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        workers: Option<u16>,
    },
    /// Compare every closed form with the simulator and with quadrature.
    Validate {
        #[arg(long, default_value = "coarse")]
        grid: GridDensity,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("qss: {e}");
    ExitCode::from(e.exit_code())
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let tolerance = match run::tolerance_override(std::env::var(run::TOLERANCE_ENV).ok()) {
                Ok(t) => t,
                Err(e) => return fail(e),
            };
            match cmd_run(&config, tolerance) {
                Ok(json) => {
                    emit(&json);
                    emit("\n");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { spec, out, workers } => match cmd_sweep(&spec, &out, workers.map(usize::from)) {
            Ok(result) => {
                eprintln!(
                    "wrote {} rows to {} ({} warnings)",
                    result.rows,
                    out.display(),
                    result.warnings
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Validate { grid } => {
            let report = cmd_validate(grid);
            emit(&report.to_string());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("qss: validation failed");
                ExitCode::from(1)
            }
        }
    }
}
