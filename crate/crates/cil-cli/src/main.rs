use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cil_cli::{compare, config::ExperimentConfig, report, selftest};
use cil_core::Error;

#[derive(Parser)]
#[command(
    name = "cil",
    about = "Class-incremental learning experiments with replay memory and fixed polytope classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config and store its artifact.
    Run {
        /// Path to the experiment config file.
        config: PathBuf,
    },
    /// Write CSV summaries and an SVG chart for stored run artifacts.
    Report {
        /// A run directory, or a directory containing several run directories.
        dir: PathBuf,
    },
    /// Compare runs pairwise per seed; the first directory is the baseline.
    Compare {
        /// Two or more run directories sharing seeds and stream.
        #[arg(num_args = 2.., required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Exercise fast internal invariant checks and report each one.
    Selftest,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch() -> Result<ExitCode, Error> {
    match Cli::parse().command {
        Command::Run { config } => {
            let (experiment, base) = ExperimentConfig::load(&config)?;
            let dir = cil_cli::run_experiment(&experiment, &base)?;
            println!("artifact written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            for path in report::report(&dir)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { dirs } => {
            let csv = compare::compare_dirs(&dirs)?;
            print!("{csv}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut failed = 0;
            for check in &checks {
                let status = if check.passed { "ok" } else { "FAILED" };
                println!("{status:6} {:30} {}", check.name, check.detail);
                if !check.passed {
                    failed += 1;
                }
            }
            if failed == 0 {
                println!("selftest passed ({} checks)", checks.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("selftest failed ({failed} of {} checks)", checks.len());
                Ok(ExitCode::from(1))
            }
        }
    }
}
