//! `kqrk`: generate corrupted systems, run the solvers, evaluate bounds and
//! reproduce the experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("KQRK_BUILD_HASH"), ")");

#[derive(Parser, Debug)]
#[command(name = "kqrk", version = VERSION, about = "Quantile randomized Kaczmarz toolkit")]
pub struct Cli {
    /// key = value file supplying any flag; the command line wins.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel sections (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a corrupted problem bundle.
    Gen(GenArgs),
    /// Run RK, qRK or dqRK on a problem and write the trace.
    Solve(SolveArgs),
    /// Evaluate constants, conditions and horizons for a problem.
    Bounds(BoundsArgs),
    /// Reproduce one of the figures.
    Experiment(ExperimentArgs),
    /// Re-check a problem bundle or an output manifest.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Fraction of corrupted rows (snapped so that beta*m is an integer).
    #[arg(long, default_value = "0.05")]
    pub beta: String,
    /// Corruption values are drawn from Uniform[0, scale].
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    /// Standard deviation of the dense noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value = "gaussian")]
    pub ensemble: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Zero the noise on corrupted rows.
    #[arg(long)]
    pub disjoint: bool,
    /// Draw corruption values from [-scale, scale].
    #[arg(long)]
    pub signed: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// rk, qrk or dqrk.
    #[arg(long, default_value = "qrk")]
    pub method: String,
    #[arg(long, default_value = "0.8")]
    pub q: String,
    #[arg(long, default_value = "0.6")]
    pub q0: String,
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// zero or project-first (default: project-first for dqrk, zero otherwise).
    #[arg(long)]
    pub init: Option<String>,
    /// Record the residual-quantile diagnostics at every iterate.
    #[arg(long)]
    pub diagnostics: bool,
    /// Update residuals through the row Gram matrix instead of recomputing.
    #[arg(long)]
    pub incremental: bool,
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Assumed sparsity level; defaults to the smallest one consistent with xi.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long, default_value = "0.8")]
    pub q: String,
    /// Lower quantile; selects the dqRK bounds.
    #[arg(long)]
    pub q0: Option<String>,
    /// exact or sampled:N.
    #[arg(long, default_value = "exact")]
    pub sigma_mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// dqRK start: project-first (on a hyperplane) or zero.
    #[arg(long, default_value = "project-first")]
    pub init: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// fig1, fig2 or fig3.
    pub figure: String,
    #[arg(long, conflicts_with = "paper")]
    pub desk: bool,
    #[arg(long)]
    pub paper: bool,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub q0: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated corruption scales (fig3).
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    /// Corruption scale (fig2).
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Comma-separated list of rk, qrk, dqrk.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Extra seeds for a min/max band around each curve (fig1, fig2).
    #[arg(long)]
    pub band_seeds: Option<usize>,
    /// Recompute residuals in full every step.
    #[arg(long)]
    pub full_residuals: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = true)]
pub struct VerifyArgs {
    /// Problem bundle directory.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// A manifest file, or a directory containing one.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let matches = Cli::command().args_override_self(true).get_matches_from(argv);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, kqrk_core::Error::TooManySubsets { .. }) {
                eprintln!("hint: pass --sigma-mode sampled:N for an upper estimate of the restricted singular values");
            }
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
