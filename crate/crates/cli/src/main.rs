//! `tvspec`: batch front end for dichotomy spectra, controllability checks,
//! spectrum assignment and continuous-time discretization.

mod commands;
mod config;
mod demo;
mod failure;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tvspec_core::controllability::{DEFAULT_GRAMIAN_FLOOR, DEFAULT_MAX_WINDOW};
use tvspec_core::io::HorizonDef;
use tvspec_core::spectrum::{Side, DEFAULT_GAP_THRESHOLD, DEFAULT_GRID_STEP, DEFAULT_WINDOW};

use crate::config::parse_horizon;
use crate::failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "tvspec", version, about = "Spectra and spectrum assignment for discrete time-varying linear systems")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumOpts {
    /// Window length L.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    pub grid_step: f64,
    #[arg(long, default_value_t = DEFAULT_GAP_THRESHOLD)]
    pub gap_threshold: f64,
    /// two-sided, plus or minus.
    #[arg(long, default_value_t = Side::TwoSided)]
    pub side: Side,
    /// Analysis horizon MIN:MAX, overriding the file.
    #[arg(long, value_parser = parse_horizon, allow_hyphen_values = true)]
    pub horizon: Option<HorizonDef>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Exact exponentials for tables, RK4 for callables.
    Auto,
    Exact,
    Rk4,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DemoCase {
    #[value(name = "theorem-2.5")]
    Theorem25,
    Dyadic,
    TriangularInclusion,
    SymmetricEquality,
    #[value(name = "lemma-4.2")]
    Lemma42,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dichotomy spectrum estimate of a system.
    Spectrum {
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        spectrum: SpectrumOpts,
        /// Keep the per-gamma verdict table in the report.
        #[arg(long)]
        verdicts: bool,
        /// Write window-exponent curves (n, mu_1, ..., mu_d) as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lyapunov exponents by the QR method.
    Lyapunov {
        #[arg(long)]
        system: PathBuf,
        /// Number of steps from index 0 (default: up to the horizon end).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_parser = parse_horizon, allow_hyphen_values = true)]
        horizon: Option<HorizonDef>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform complete controllability certificate.
    Ucc {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_WINDOW)]
        max_window: usize,
        #[arg(long, default_value_t = DEFAULT_GRAMIAN_FLOOR)]
        floor: f64,
        #[arg(long, value_parser = parse_horizon, allow_hyphen_values = true)]
        horizon: Option<HorizonDef>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feedback assigning a union of intervals as closed-loop spectrum.
    Assign {
        #[arg(long)]
        system: PathBuf,
        /// Disjoint intervals, e.g. "[-1,-0.5],[0,0]".
        #[arg(long, allow_hyphen_values = true)]
        targets: String,
        #[command(flatten)]
        spectrum: SpectrumOpts,
        #[arg(long, default_value_t = tvspec_core::assignment::DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_WINDOW)]
        max_window: usize,
        #[arg(long, default_value_t = DEFAULT_GRAMIAN_FLOOR)]
        floor: f64,
        /// Seed of bounded strictly-upper entries of the triangular target.
        #[arg(long)]
        fill_seed: Option<u64>,
        /// Bound of those entries (0 keeps the target diagonal).
        #[arg(long, default_value_t = 0.0)]
        fill_bound: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check an assignment file.
    Verify {
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the 1-time discrete system of a continuous system.
    Discretize {
        #[arg(long)]
        continuous: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        #[arg(long, default_value_t = tvspec_core::continuous::DEFAULT_SUBSTEPS)]
        substeps: usize,
    },
    /// Named constructions from the theory, end to end.
    Demo {
        #[arg(long, value_enum)]
        case: DemoCase,
        #[arg(long, allow_hyphen_values = true)]
        targets: Option<String>,
        #[command(flatten)]
        spectrum: SpectrumOpts,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Numerical(format!("thread pool: {e}")))?;
    }
    let threads = cli.threads;
    match cli.command {
        Command::Spectrum {
            system,
            spectrum,
            verdicts,
            csv,
            seed,
            out,
        } => commands::spectrum(&system, &spectrum, verdicts, csv.as_deref(), seed, out.as_deref(), threads),
        Command::Lyapunov {
            system,
            samples,
            horizon,
            seed,
            out,
        } => commands::lyapunov(&system, samples, horizon, seed, out.as_deref(), threads),
        Command::Ucc {
            system,
            max_window,
            floor,
            horizon,
            seed,
            out,
        } => commands::ucc(&system, max_window, floor, horizon, seed, out.as_deref(), threads),
        Command::Assign {
            system,
            targets,
            spectrum,
            tol,
            max_window,
            floor,
            fill_seed,
            fill_bound,
            seed,
            out,
        } => commands::assign(
            &system,
            &targets,
            &spectrum,
            commands::AssignFlags {
                tol,
                max_window,
                floor,
                fill_seed,
                fill_bound,
            },
            seed,
            out.as_deref(),
            threads,
        ),
        Command::Verify { assignment, tol, out } => commands::verify(&assignment, tol, out.as_deref(), threads),
        Command::Discretize {
            continuous,
            out,
            method,
            substeps,
        } => commands::discretize(&continuous, &out, method, substeps, threads),
        Command::Demo {
            case,
            targets,
            spectrum,
            tol,
            seed,
            out,
        } => demo::run(case, targets.as_deref(), &spectrum, tol, seed, out.as_deref(), threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tvspec: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
