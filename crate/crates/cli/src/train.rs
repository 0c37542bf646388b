//! The `train` subcommand: one training run per seed, each written to its
//! own `seed_<n>/` directory.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use abr_core::abr::{evaluate_policy, train_with_eval, write_metrics_csv, Agent, TrainRun};
use abr_core::baselines::train_baseline_with_eval;
use abr_core::data::Dataset;
use abr_core::envs::{generate_dataset, reference_returns, BehaviorSpec, Environment, ReferenceReturns};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_out, MethodName, RunConfig};
use crate::error::{CliError, CliResult};

/// Seed of the reference-return rollouts, shared by every dataset of an
/// environment.
pub const REFERENCE_SEED: u64 = 0;
const EVAL_STREAM: u64 = 0x9e6c_63d0_676a_9a99;

/// Final outcome of one seed; `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub method: MethodName,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub uniform_samples: usize,
    pub alpha_fixed: f64,
    pub total_steps: usize,
    pub final_return: f64,
    pub normalized_score: f64,
    pub references: ReferenceReturns,
}

/// Wall-clock facts, kept apart from the reproducible artifacts; `meta.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_clock_seconds: f64,
    pub finished_unix_seconds: u64,
}

/// Where `summary.json` and friends for `seed` live under `dir`.
pub fn seed_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}"))
}

/// `<dataset>.refs.json`, next to the dataset.
pub fn refs_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("refs.json")
}

pub fn load_refs(path: &Path) -> CliResult<ReferenceReturns> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Loads or generates the run's dataset and its reference returns.
pub fn prepare_data(cfg: &RunConfig) -> CliResult<(Dataset, ReferenceReturns)> {
    let dataset = match (&cfg.dataset.path, &cfg.dataset.behavior, cfg.dataset.n) {
        (Some(path), _, _) => Dataset::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        (None, Some(tag), Some(n)) => {
            let spec = BehaviorSpec::from_tag(&cfg.env, tag)?;
            generate_dataset(&cfg.env, &spec, n, cfg.dataset.seed)?
        }
        _ => return Err(CliError::Config("dataset: give either `path` or `behavior` with `n`".into())),
    };
    check_matches_env(&dataset, &cfg.env)?;
    let sidecar = cfg.dataset.path.as_deref().map(refs_path).filter(|p| p.exists());
    let refs = match sidecar {
        Some(p) => load_refs(&p)?,
        None => reference_returns(&cfg.env, cfg.reference_episodes, REFERENCE_SEED)?,
    };
    Ok((dataset, refs))
}

fn check_matches_env(dataset: &Dataset, env: &Environment) -> CliResult<()> {
    let (low, high) = env.action_bounds();
    if dataset.state_dim() != env.state_dim() || dataset.action_low() != low || dataset.action_high() != high {
        return Err(CliError::Runtime(format!(
            "dataset shape does not match the {} environment",
            env.name()
        )));
    }
    Ok(())
}

/// Trains one seed, evaluating at every metrics row.
pub fn run_seed(
    cfg: &RunConfig,
    dataset: &Dataset,
    refs: &ReferenceReturns,
    seed: u64,
) -> CliResult<(TrainRun, SeedSummary)> {
    let episodes = cfg.eval_episodes;
    let env = &cfg.env;
    let mut hook = |agent: &Agent| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_STREAM);
        evaluate_policy(env, &agent.policy(), episodes, &mut rng)
    };
    let run = match cfg.method {
        MethodName::Abr => train_with_eval(dataset, &cfg.abr_config(seed), &mut hook)?,
        _ => train_baseline_with_eval(dataset, &cfg.baseline_config(seed), &mut hook)?,
    };
    let final_return = run
        .metrics
        .last()
        .and_then(|m| m.eval_return)
        .ok_or_else(|| CliError::Runtime("run produced no evaluation".into()))?;
    let summary = SeedSummary {
        method: cfg.method,
        seed,
        alpha: cfg.abr.alpha,
        beta: cfg.abr.beta,
        uniform_samples: cfg.abr.uniform_samples,
        alpha_fixed: cfg.alpha_fixed,
        total_steps: cfg.td3.total_steps,
        final_return,
        normalized_score: refs.normalize(final_return)?,
        references: *refs,
    };
    Ok((run, summary))
}

/// Writes `metrics.csv`, the three networks, `summary.json` and `meta.json`.
pub fn write_seed(dir: &Path, run: &TrainRun, summary: &SeedSummary, started: Instant) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let metrics_path = dir.join("metrics.csv");
    let file = File::create(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?;
    write_metrics_csv(&run.metrics, file)?;
    run.agent.save_checkpoint(dir)?;
    write_json(&dir.join("summary.json"), summary)?;
    let meta = RunMeta {
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        finished_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    write_json(&dir.join("meta.json"), &meta)
}

/// Runs every seed of `cfg` and returns their summaries in seed order.
pub fn train(cfg: &RunConfig) -> CliResult<Vec<SeedSummary>> {
    cfg.validate()?;
    let out = resolve_out(&cfg.out_dir);
    let (dataset, refs) = prepare_data(cfg)?;
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_json(&out.join("config.json"), cfg)?;
    write_json(&out.join("refs.json"), &refs)?;
    let mut summaries = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let (run, summary) = run_seed(cfg, &dataset, &refs, seed)?;
        write_seed(&seed_dir(&out, seed), &run, &summary, started)?;
        summaries.push(summary);
    }
    Ok(summaries)
}
