//! Scenario runner for the agenda-setting solvers.
//!
//! `run` executes one configured computation, `sweep` evaluates it over a
//! parameter grid, `verify` runs the randomized self-checks, and `simulate`
//! plays a constructed profile by Monte Carlo. Reports are JSON (sweeps also
//! emit CSV); identical configuration and seed reproduce identical bytes.

mod config;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tasks::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "agenda")]
#[command(about = "Solvers and simulation for dynamic agenda-setting games with committee voting")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Random seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Solver tolerance override.
    #[arg(long)]
    tol: Option<f64>,

    /// Enumeration horizon override.
    #[arg(long)]
    max_periods: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured scenario once
    Run {
        /// Scenario configuration (TOML)
        #[arg(long)]
        config: PathBuf,

        #[command(flatten)]
        common: CommonFlags,
    },

    /// Evaluate the configured scenario over the [grid] section
    Sweep {
        /// Scenario configuration (TOML)
        #[arg(long)]
        config: PathBuf,

        #[command(flatten)]
        common: CommonFlags,
    },

    /// Run a randomized self-verification suite: poisson | ranking | all
    Verify {
        target: String,

        #[command(flatten)]
        common: CommonFlags,
    },

    /// Monte Carlo play-out of a constructed profile
    Simulate {
        /// Scenario configuration (TOML)
        #[arg(long)]
        config: PathBuf,

        /// Episode count override.
        #[arg(long)]
        episodes: Option<u64>,

        #[command(flatten)]
        common: CommonFlags,
    },
}

fn load_config(path: &PathBuf) -> Result<config::Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    config::parse(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn overrides(common: &CommonFlags, episodes: Option<u64>) -> Overrides {
    Overrides {
        seed: common.seed,
        tol: common.tol,
        max_periods: common.max_periods,
        episodes,
    }
}

fn out_dir(common: &CommonFlags, config: Option<&config::Config>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, common } => {
            let config = load_config(config)?;
            let output = tasks::run_task(&config, &overrides(common, None))?;
            for path in tasks::write_output(&out_dir(common, Some(&config)), &output)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Sweep { config, common } => {
            let config = load_config(config)?;
            let output = tasks::sweep_task(&config, &overrides(common, None))?;
            for path in tasks::write_output(&out_dir(common, Some(&config)), &output)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Verify { target, common } => {
            let seed = common.seed.unwrap_or(0);
            let tol = common.tol.unwrap_or(1e-12);
            let report = tasks::verify_target(target, seed, tol)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::Simulate { config, episodes, common } => {
            let mut config = load_config(config)?;
            config.task.kind = config::TaskKind::Simulate;
            let output = tasks::run_task(&config, &overrides(common, *episodes))?;
            for path in tasks::write_output(&out_dir(common, Some(&config)), &output)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let body = json!({
                "error": {
                    "kind": err.kind(),
                    "message": err.message(),
                    "exit_code": err.exit_code(),
                }
            });
            eprintln!("{body}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
