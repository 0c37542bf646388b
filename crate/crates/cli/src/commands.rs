//! The smaller subcommands: `gen-data`, `eval`, `landscape` and `oracle-check`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use abr_core::abr::{evaluate_policy, ActorPolicy};
use abr_core::envs::{
    generate_dataset, reference_returns, BanditEnv, BehaviorPolicy, BehaviorSpec, Environment, ReferenceReturns,
};
use abr_core::oracle::{landscape, oracle_suite, write_landscape_csv, LandscapeConfig, OracleReport, SuiteOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{parse_json, resolve_out};
use crate::error::{CliError, CliResult};
use crate::train::{load_refs, refs_path, write_json, REFERENCE_SEED};

/// Writes the dataset and its `.refs.json` sidecar.
pub fn gen_data(
    env: &Environment,
    behavior: &str,
    n: usize,
    seed: u64,
    out: &Path,
    reference_episodes: usize,
) -> CliResult<Value> {
    if n == 0 {
        return Err(CliError::Config("n: must be positive".into()));
    }
    if reference_episodes == 0 {
        return Err(CliError::Config("reference-episodes: must be positive".into()));
    }
    let spec = BehaviorSpec::from_tag(env, behavior).map_err(|e| CliError::Config(format!("behavior: {e}")))?;
    let dataset = generate_dataset(env, &spec, n, seed)?;
    let refs = reference_returns(env, reference_episodes, REFERENCE_SEED)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    dataset.save(out)?;
    let sidecar = refs_path(out);
    write_json(&sidecar, &refs)?;
    Ok(json!({
        "dataset": out,
        "references": sidecar,
        "transitions": dataset.len(),
        "random_return": refs.random,
        "expert_return": refs.expert,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub normalized_score: f64,
    pub references: ReferenceReturns,
}

/// Rolls out a saved actor; references come from `refs` or are recomputed.
pub fn eval(env: &Environment, actor: &Path, episodes: usize, seed: u64, refs: Option<&Path>) -> CliResult<EvalReport> {
    if episodes == 0 {
        return Err(CliError::Config("episodes: must be positive".into()));
    }
    let (low, high) = env.action_bounds();
    let policy = ActorPolicy::load(actor, low, high).map_err(|e| CliError::Runtime(format!("{}: {e}", actor.display())))?;
    let references = match refs {
        Some(p) => load_refs(p)?,
        None => reference_returns(env, 100, REFERENCE_SEED)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_return = evaluate_policy(env, &policy, episodes, &mut rng)?;
    Ok(EvalReport {
        episodes,
        mean_return,
        normalized_score: references.normalize(mean_return)?,
        references,
    })
}

/// `landscape --config`: bandit data from the default mixture, one curve
/// per (α, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeRun {
    #[serde(default)]
    pub env: BanditEnv,
    #[serde(default = "default_landscape_n")]
    pub n: usize,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    pub out_dir: PathBuf,
}

fn default_landscape_n() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxRow {
    pub alpha: f64,
    pub seed: u64,
    pub action: f64,
    pub behavior_density: f64,
    pub objective_value: f64,
}

impl LandscapeRun {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let run: LandscapeRun = parse_json(text)?;
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.n == 0 {
            return Err(CliError::Config("n: must be positive".into()));
        }
        self.env.validate().map_err(|e| CliError::Config(format!("env: {e}")))?;
        self.landscape
            .validate()
            .map_err(|e| CliError::Config(format!("landscape: {e}")))
    }
}

/// Writes `landscape.csv` and `argmax.json` under the run's output directory.
pub fn run_landscape(run: &LandscapeRun) -> CliResult<Vec<ArgmaxRow>> {
    run.validate()?;
    let out = resolve_out(&run.out_dir);
    let env = Environment::Bandit(run.env.clone());
    let behavior = BehaviorPolicy::bandit_default();
    let spec = BehaviorSpec::Mixture {
        components: behavior.components().to_vec(),
    };
    let dataset = generate_dataset(&env, &spec, run.n, run.data_seed)?;
    let curves = landscape(&dataset, &behavior, &run.env, &run.landscape)?;
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let csv_path = out.join("landscape.csv");
    let file = File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    write_landscape_csv(&curves, BufWriter::new(file))?;
    let rows: Vec<ArgmaxRow> = curves
        .iter()
        .map(|c| {
            let best = c.argmax();
            ArgmaxRow {
                alpha: c.alpha,
                seed: c.seed,
                action: best.action,
                behavior_density: best.behavior_density,
                objective_value: best.objective_value,
            }
        })
        .collect();
    write_json(&out.join("argmax.json"), &rows)?;
    Ok(rows)
}

pub fn oracle_check(problems: usize, seed: u64) -> CliResult<OracleReport> {
    Ok(oracle_suite(&SuiteOptions {
        problems,
        seed,
        ..Default::default()
    })?)
}
