mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;

/// Noise, semigroup, HJB and verification experiments for OU processes
/// driven by cylindrical alpha-stable noise.
#[derive(Parser)]
#[command(name = "levy-hjb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set mc.seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; defaults to the `output` key of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo loops; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Empirical characteristic function and Levy-constant tables.
    CheckNoise,
    /// Lower bound on the noise coefficients and trace-series summability.
    CheckHypothesis,
    /// Semigroup, gradient-decay and generator-consistency tables.
    CheckOu,
    /// Solve the HJB fixed point and store the solution.
    SolveHjb,
    /// Dominance and fundamental-formula residuals against a stored solution.
    Verify,
    /// Markdown summary of the tables in the output directory.
    Report,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path, &cli.overrides)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.clone());
    std::fs::create_dir_all(&out)?;
    match cli.command {
        Command::CheckNoise => commands::check_noise(&cfg, &out),
        Command::CheckHypothesis => commands::check_hypothesis(&cfg, &out),
        Command::CheckOu => commands::check_ou(&cfg, &out),
        Command::SolveHjb => commands::solve_hjb(&cfg, &out),
        Command::Verify => commands::verify(&cfg, &out),
        Command::Report => report::report(&cfg, &out, &path.display().to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levy-hjb: {e}");
            e.exit_code()
        }
    }
}
