use clap::{Parser, Subcommand};
use sheetlab_cli::{config::LoadedConfig, commands, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical laboratory for planar vortex-sheet dynamics: evolve sheets,
/// evaluate weak-form residuals, and estimate curve-regularity
/// diagnostics.
#[derive(Parser)]
#[command(name = "sheetlab", version)]
struct Cli {
    /// Run configuration (single JSON document).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the data-parallel kernels (wall time only;
    /// results are bitwise independent of this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve an initial sheet and store the trajectory.
    Simulate,
    /// Evaluate weak-form residuals on a stored trajectory.
    Residual {
        /// Trajectory file (JSON lines).
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Regular-curve constant and density norms along a trajectory.
    Regularity {
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Named resolution studies (CSV of resolution vs error).
    Convergence,
    /// Self-checks of the exact reference solutions.
    OracleCheck,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lc = LoadedConfig::from_str(&raw).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        lc.config.seed = seed;
    }
    match &cli.command {
        Command::Simulate => commands::cmd_simulate(&lc, &cli.out),
        Command::Residual { trajectory } => {
            commands::cmd_residual(&lc, trajectory, &cli.out).map(|_| ())
        }
        Command::Regularity { trajectory } => {
            commands::cmd_regularity(&lc, trajectory, &cli.out).map(|_| ())
        }
        Command::Convergence => commands::cmd_convergence(&lc, &cli.out).map(|_| ()),
        Command::OracleCheck => commands::cmd_oracle_check(&lc, &cli.out).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
