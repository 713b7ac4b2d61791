//! `vlsf`: bounds, constants, approximations and simulations for
//! variable-length stop-feedback codes over common-message broadcast channels.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, unreadable
//! channel files, empty grids) and 2 when a computation fails.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vlsf", version, about = "Finite-length VLSF bounds for common-message broadcast channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capacity, optimal input and per-user moments.
    Analyze,
    /// Random-coding achievability bound on log M.
    Achieve,
    /// Converse bound on log M (symmetric channels with identical users).
    Converse,
    /// Normal approximation with both second-order constants.
    Approx,
    /// Second-order constants for both variance normalisations.
    Constants,
    /// Monte Carlo run of the coding scheme, checked against the bounds.
    Simulate(SimArgs),
    /// Curve families for BSC(0.11) at ε = 1e-3, written as four CSV files.
    Figure2,
    /// Brute-force converse over every input sequence of length t.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Number of messages.
    #[arg(long, default_value_t = 64)]
    m: usize,
    /// Decoding thresholds in nats; several values form a ladder.
    #[arg(long, value_delimiter = ',', required = true)]
    gamma: Vec<f64>,
    /// Probability of stopping at time zero.
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Defaults to ⌈8γ/C⌉.
    #[arg(long)]
    horizon_cap: Option<usize>,
    /// Reuse one codebook for every trial.
    #[arg(long)]
    fixed_codebook: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Sequence length.
    #[arg(long, default_value_t = 4)]
    t: usize,
    #[arg(long)]
    log_m: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Simple,
    Tight,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VarianceArg {
    Conditional,
    Unconditional,
}

#[derive(Debug, Args)]
struct Opts {
    /// Channel JSON file, or a built-in: `bsc:<δ>` or `pair:<δ11>,<δ12>,<δ21>,<δ22>`.
    #[arg(long, global = true)]
    channel: Option<String>,
    /// Replace the users by K copies of the first one.
    #[arg(long = "replicate-K", global = true)]
    replicate_k: Option<usize>,
    #[arg(long, global = true, default_value_t = 1e-3)]
    eps: f64,
    /// Explicit blocklengths; overrides the min/max/step grid.
    #[arg(long, global = true, value_delimiter = ',')]
    ell: Vec<f64>,
    #[arg(long, global = true)]
    ell_min: Option<f64>,
    #[arg(long, global = true)]
    ell_max: Option<f64>,
    #[arg(long, global = true)]
    ell_step: Option<f64>,
    #[arg(long, global = true)]
    gamma_points: Option<usize>,
    #[arg(long, global = true)]
    eta_points: Option<usize>,
    /// Lattice step for multi-atom increment laws, in nats.
    #[arg(long, global = true)]
    lattice_h: Option<f64>,
    /// Transient mass at which first-passage recursions stop.
    #[arg(long, global = true)]
    tail_tol: Option<f64>,
    #[arg(long, global = true)]
    w_max: Option<f64>,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Tight)]
    mode: ModeArg,
    #[arg(long, global = true, value_enum, default_value_t = VarianceArg::Unconditional)]
    variance: VarianceArg,
    #[arg(long, global = true, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cache directory; falls back to $VLSF_CACHE_DIR.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    no_cache: bool,
    /// Output file (a directory for figure2); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also report capacities and rates in bits.
    #[arg(long, global = true)]
    bits: bool,
}

/// A problem with the invocation rather than with a computation.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command, &cli.opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// A closed stdout (`vlsf ... | head`) ends the run quietly.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}
