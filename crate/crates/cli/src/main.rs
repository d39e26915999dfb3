//! `euler-lab` command-line driver.
//!
//! Exit codes: 0 ok, 1 other errors, 2 configuration error, 3 check failure,
//! 4 numeric abort.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use euler_lab::Error;

use commands::{Outcome, Overrides};

#[derive(Parser, Debug)]
#[command(
    name = "euler-lab",
    version,
    about = "Spectral laboratory for the stochastic 3D Euler system"
)]
struct Cli {
    /// Configuration file; built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed of the ensemble (and driver seed of `wild`).
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "INT")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Galerkin ensemble with vanishing viscosity, verified against (M1) and (M3).
    Simulate,
    /// Convex-integration trajectories for every defect level, with seam-audited extensions.
    Wild,
    /// Iterated discounted maximization over candidate laws.
    Select {
        /// Candidate directories, one law each; overrides `select.candidates`.
        candidates: Vec<PathBuf>,
    },
    /// Seminorms and the stopping time `T_L` of a stored path file.
    Norms {
        path: PathBuf,
        /// Hölder exponents in (0, 1) for the `H¹` driver.
        #[arg(long, value_delimiter = ',')]
        exponents: Vec<f64>,
    },
    /// Re-verify stored trajectories.
    Verify {
        /// Trajectory directories or parents of them; defaults to the output directory.
        dirs: Vec<PathBuf>,
    },
    /// Print the default configuration.
    Defaults,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Numeric { .. } | Error::NoConvergence(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
    };
    let result = match cli.command {
        Command::Simulate => commands::simulate(&overrides),
        Command::Wild => commands::wild(&overrides),
        Command::Select { candidates } => commands::select(&overrides, &candidates),
        Command::Norms { path, exponents } => commands::norms(&overrides, &path, &exponents),
        Command::Verify { dirs } => commands::verify(&overrides, &dirs),
        Command::Defaults => commands::defaults(),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed(msg)) => {
            eprintln!("check failure: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
