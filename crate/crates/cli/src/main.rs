use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::Config;

/// Invalid input: bad flags, config entries or parameters. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "fraccolloc", version, about = "Collocation time stepping for time-fractional subdiffusion")]
struct Cli {
    /// JSON file whose keys mirror the flags; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for JSON and CSV outputs
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve on a uniform temporal mesh and report the error
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Number of uniform time intervals
        #[arg(long)]
        intervals: Option<usize>,
    },
    /// Adaptive run driven by the residual barrier
    Adapt {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        barrier: BarrierArgs,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Eigenvalue sweep of the well-posedness matrix over an α grid
    Spectrum {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        points: Option<String>,
        /// Number of α values, equally spaced on (0, 1]
        #[arg(long)]
        alpha_grid: Option<usize>,
    },
    /// Adaptive runs over a list of tolerances with a fitted rate
    Convergence {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        barrier: BarrierArgs,
        /// Comma-separated tolerances
        #[arg(long, value_delimiter = ',')]
        tols: Option<Vec<f64>>,
    },
    /// Run the built-in invariant checks
    Selftest,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    /// ex1, ex2, poly or zero
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Polynomial degree of ∂^α u on each interval
    #[arg(long)]
    pub m: Option<usize>,
    /// gauss-legendre, gauss-lobatto, equidistant-interior, equidistant-with-zero, right-endpoint
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Finite-element cells on (0, 1)
    #[arg(long)]
    pub cells: Option<usize>,
    /// Finite-element degree, 1 or 2
    #[arg(long)]
    pub degree: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct BarrierArgs {
    /// r0 or r1
    #[arg(long)]
    pub barrier: Option<String>,
    /// linf or l2
    #[arg(long)]
    pub norm: Option<String>,
    /// First trial step; defaults to T
    #[arg(long)]
    pub tau_init: Option<f64>,
    /// Residual samples per interval
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub max_rejections: Option<usize>,
    /// Use the L0 step on the first interval
    #[arg(long)]
    pub l0_first: bool,
}

fn configure_threads() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("FRACCOLLOC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("FRACCOLLOC_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let out_dir = cfg.pick(cli.out_dir, "out-dir", PathBuf::from("out"))?;
    match cli.command {
        Command::Solve { problem, intervals } => commands::solve(&cfg, &out_dir, &problem, intervals),
        Command::Adapt { problem, barrier, tol } => commands::adapt(&cfg, &out_dir, &problem, &barrier, tol),
        Command::Spectrum { m, points, alpha_grid } => commands::spectrum(&cfg, &out_dir, m, points, alpha_grid),
        Command::Convergence { problem, barrier, tols } => {
            commands::convergence(&cfg, &out_dir, &problem, &barrier, tols)
        }
        Command::Selftest => commands::selftest(&out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on unknown or malformed flags
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<fraccolloc::Error>(),
                    Some(fraccolloc::Error::InvalidArgument(_) | fraccolloc::Error::InvalidPoints(_))
                );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
