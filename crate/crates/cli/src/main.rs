use std::path::PathBuf;
use std::process::ExitCode;

use abr_cli::commands::{eval, gen_data, oracle_check, run_landscape, LandscapeRun};
use abr_cli::config::parse_env;
use abr_cli::sweep::{sweep, SweepConfig};
use abr_cli::train::train;
use abr_cli::{CliError, CliResult, RunConfig};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "abr", version, about = "Offline RL with adaptive behavior regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset plus its reference returns.
    GenData {
        /// `bandit`, `point_mass`, or a path to an environment JSON file.
        #[arg(long)]
        env: String,
        /// expert, medium, mixed, random, or default (bandit mixture).
        #[arg(long, default_value = "default")]
        behavior: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        reference_episodes: usize,
    },
    /// Train every seed of a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a saved actor and normalize its return.
    Eval {
        #[arg(long)]
        env: String,
        #[arg(long)]
        actor: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference returns JSON; recomputed when absent.
        #[arg(long)]
        refs: Option<PathBuf>,
    },
    /// Learned objective over the bandit action grid.
    Landscape {
        #[arg(long)]
        config: PathBuf,
    },
    /// Learning-free checks of the regularized backup.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        problems: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Grid over alpha, beta and uniform samples, then aggregate.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's worker count.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn read_config(path: &PathBuf) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::GenData {
            env,
            behavior,
            n,
            seed,
            out,
            reference_episodes,
        } => {
            let env = parse_env(&env)?;
            print_json(&gen_data(&env, &behavior, n, seed, &out, reference_episodes)?)?;
        }
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            print_json(&train(&cfg)?)?;
        }
        Command::Eval {
            env,
            actor,
            episodes,
            seed,
            refs,
        } => {
            let env = parse_env(&env)?;
            print_json(&eval(&env, &actor, episodes, seed, refs.as_deref())?)?;
        }
        Command::Landscape { config } => {
            let run = LandscapeRun::from_json(&read_config(&config)?)?;
            print_json(&run_landscape(&run)?)?;
        }
        Command::OracleCheck { problems, seed } => {
            let report = oracle_check(problems, seed)?;
            print_json(&report)?;
            return Ok(report.holds);
        }
        Command::Sweep { config, jobs } => {
            let mut cfg = SweepConfig::load(&config)?;
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            print_json(&sweep(&cfg)?)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("abr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
