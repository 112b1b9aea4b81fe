use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reachsec_cli::{dispatch, load_config, CliError, Command, THREADS_ENV};

/// Reachable-set bounds under stealthy sensor attacks and
/// performance/security gain co-design.
///
/// Worker threads default to the available parallelism and can be set with
/// the REACHSEC_THREADS environment variable. Exit codes: 0 success, 1 usage
/// or input error, 2 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "reachsec", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Write the JSON envelope here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Write the CSV table of `sweep` or `boundary` here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Performance, covariances and reachable-set bound at the configured gains.
    Analyze { config: PathBuf },
    /// Open-loop gain and minimum attainable gain with its minimizer.
    GammaBounds { config: PathBuf },
    /// Minimum-attack-impact gains for one performance level.
    Design {
        config: PathBuf,
        #[arg(long)]
        gamma_bar: f64,
    },
    /// Performance/security trade-off curve.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 12)]
        steps: usize,
        /// Start every point from scratch instead of from its neighbor.
        #[arg(long)]
        cold: bool,
    },
    /// Exact boundary points of the reachable set at the configured gains.
    Boundary {
        config: PathBuf,
        /// Horizon; defaults to the configured horizon policy.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 360)]
        directions: usize,
    },
    /// Monte-Carlo containment check of attacked trajectories.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long)]
        k: Option<usize>,
        /// Defaults to the solver seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Gain choices that cancel the attack entirely.
    CheckTrivial { config: PathBuf },
}

impl Cmd {
    fn split(self) -> (PathBuf, Command) {
        match self {
            Cmd::Analyze { config } => (config, Command::Analyze),
            Cmd::GammaBounds { config } => (config, Command::GammaBounds),
            Cmd::Design { config, gamma_bar } => (config, Command::Design { gamma_bar }),
            Cmd::Sweep { config, from, to, steps, cold } => (config, Command::Sweep { from, to, steps, cold }),
            Cmd::Boundary { config, k, directions } => (config, Command::Boundary { k, directions }),
            Cmd::Simulate { config, trials, k, seed } => (config, Command::Simulate { trials, k, seed }),
            Cmd::CheckTrivial { config } => (config, Command::CheckTrivial),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} worker threads: {e}")))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (config_path, command) = cli.command.split();
    let config = load_config(&config_path)?;
    let out = dispatch(&command, &config)?;
    let json = out.envelope.to_json()?;
    match &cli.output {
        Some(p) => write(p, &json)?,
        None => print!("{json}"),
    }
    match (&cli.csv, &out.csv) {
        (Some(p), Some(table)) => write(p, table)?,
        (Some(_), None) => log::warn!("{} produces no CSV table; --csv ignored", command.name()),
        _ => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reachsec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
