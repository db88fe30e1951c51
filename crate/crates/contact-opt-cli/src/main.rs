//! `contactopt`: solve, verify and cross-check dissipative optimal control
//! problems described by JSON problem files.
//!
//! Exit codes: 0 success, 1 input error, 2 solver or verification failure.

mod csvout;
mod pipeline;
mod problem;
mod report;

use clap::{Args, Parser, Subcommand};
use contact_opt::error::Error;
use pipeline::Outcome;
use problem::{Overrides, ProblemFile};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "contactopt",
    about = "Dissipative optimal control via contact Hamiltonian geometry",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Write the trajectory CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON run report here (it is always printed to stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Seed for restarts and sampled verifications.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the shooting residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Fixed-step count for the integrator (forces rk4).
    #[arg(long)]
    steps: Option<usize>,
    /// Constraint-algorithm depth for singular problems.
    #[arg(long)]
    depth: Option<usize>,
    /// Override the normal multiplier (nonzero).
    #[arg(long, allow_negative_numbers = true)]
    lambda0: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem and emit a trajectory plus a run report.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Run every invariant check applicable to the problem kind.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Direct-transcription cross-check (kinds ocp and herglotz_ocp).
    Oracle {
        file: PathBuf,
        /// Number of transcription intervals.
        intervals: Option<usize>,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Built-in gas-piston-damper demonstration.
    Demo {
        #[command(flatten)]
        flags: CommonFlags,
    },
}

fn overrides(flags: &CommonFlags) -> Overrides {
    Overrides {
        seed: flags.seed,
        tol: flags.tol,
        steps: flags.steps,
        depth: flags.depth,
        lambda0: flags.lambda0,
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Syntax { .. }
        | Error::UnknownFunction { .. }
        | Error::EmptyExpression
        | Error::UnboundVariable { .. }
        | Error::Dimension(_)
        | Error::NameCollision(_)
        | Error::Config(_)
        | Error::Invalid(_) => 1,
        Error::Domain { .. }
        | Error::Singular(_)
        | Error::NoConvergence { .. }
        | Error::Integration { .. } => 2,
    }
}

fn emit(outcome: &mut Outcome, flags: &CommonFlags, started: Instant) -> i32 {
    outcome.report.wall_time_s = started.elapsed().as_secs_f64();
    if let (Some(path), Some(traj)) = (&flags.out, &outcome.trajectory) {
        if let Err(e) = csvout::write_trajectory(path, traj) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 1;
        }
    }
    let json = outcome.report.to_json();
    println!("{json}");
    if let Some(path) = &flags.report {
        if let Err(e) = std::fs::write(path, &json) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 1;
        }
    }
    if let Some(failure) = &outcome.failure {
        eprintln!("error: {failure}");
        return 2;
    }
    if !outcome.report.all_pass() {
        let failed: Vec<&str> = outcome
            .report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        eprintln!("error: checks failed: {}", failed.join(", "));
        return 2;
    }
    0
}

fn run() -> i32 {
    let cli = Cli::parse();
    let started = Instant::now();
    let (result, flags) = match &cli.command {
        Command::Solve { file, flags } => (
            ProblemFile::load(file)
                .and_then(|pf| pipeline::pipeline(&pf.kind)?.solve(&pf, &overrides(flags))),
            flags.clone(),
        ),
        Command::Verify { file, flags } => (
            ProblemFile::load(file)
                .and_then(|pf| pipeline::pipeline(&pf.kind)?.verify(&pf, &overrides(flags))),
            flags.clone(),
        ),
        Command::Oracle {
            file,
            intervals,
            flags,
        } => (
            ProblemFile::load(file)
                .and_then(|pf| pipeline::run_oracle(&pf, &overrides(flags), *intervals)),
            flags.clone(),
        ),
        Command::Demo { flags } => (
            pipeline::pipeline("gas_piston")
                .and_then(|p| p.solve(&pipeline::demo_problem(), &overrides(flags))),
            flags.clone(),
        ),
    };
    match result {
        Ok(mut outcome) => emit(&mut outcome, &flags, started),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn main() {
    std::process::exit(run());
}
