//! The `sweep` subcommand: a cartesian grid over α, β and M (uniform samples)
//! crossed with the seed list, followed by aggregation.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{parse_json, resolve_out, MethodName, RunConfig};
use crate::error::{CliError, CliResult};
use crate::train::{prepare_data, run_seed, seed_dir, write_json, write_seed, SeedSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// For `td3bc` these values set `alpha_fixed`.
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub uniform_samples: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Shared settings; its `out_dir` is the sweep root.
    pub base: RunConfig,
    pub grid: SweepGrid,
    /// Concurrent workers; defaults to the available cores.
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub beta: f64,
    pub uniform_samples: usize,
    pub dir: String,
}

/// `sweep.json`: what the aggregator expects to find.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub method: MethodName,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
}

/// One line of `aggregate.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: MethodName,
    pub alpha: f64,
    pub beta: f64,
    pub uniform_samples: usize,
    pub seeds: usize,
    pub mean_score: f64,
    pub sd_score: f64,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: SweepConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validates the base config and every grid point.
    pub fn validate(&self) -> CliResult<()> {
        self.base.validate()?;
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs: must be at least 1".into()));
        }
        for p in self.points() {
            self.point_config(&p)
                .validate()
                .map_err(|e| CliError::Config(format!("grid point {}: {e}", p.dir)))?;
        }
        Ok(())
    }

    /// Cartesian product in (α, β, M) order; empty axes take the base value.
    pub fn points(&self) -> Vec<SweepPoint> {
        let base_alpha = match self.base.method {
            MethodName::Td3bc => self.base.alpha_fixed,
            _ => self.base.abr.alpha,
        };
        let or_base = |v: &Vec<f64>, b: f64| if v.is_empty() { vec![b] } else { v.clone() };
        let alphas = or_base(&self.grid.alpha, base_alpha);
        let betas = or_base(&self.grid.beta, self.base.abr.beta);
        let ms = if self.grid.uniform_samples.is_empty() {
            vec![self.base.abr.uniform_samples]
        } else {
            self.grid.uniform_samples.clone()
        };
        let mut out = Vec::new();
        for &alpha in &alphas {
            for &beta in &betas {
                for &m in &ms {
                    out.push(SweepPoint {
                        alpha,
                        beta,
                        uniform_samples: m,
                        dir: format!("alpha_{alpha}_beta_{beta}_m_{m}"),
                    });
                }
            }
        }
        out
    }

    pub fn point_config(&self, p: &SweepPoint) -> RunConfig {
        let mut cfg = self.base.clone();
        match cfg.method {
            MethodName::Td3bc => cfg.alpha_fixed = p.alpha,
            _ => cfg.abr.alpha = p.alpha,
        }
        cfg.abr.beta = p.beta;
        cfg.abr.uniform_samples = p.uniform_samples;
        cfg.out_dir = self.base.out_dir.join(&p.dir);
        cfg
    }

    pub fn manifest(&self) -> SweepManifest {
        SweepManifest {
            method: self.base.method,
            seeds: self.base.seeds.clone(),
            points: self.points(),
        }
    }
}

/// Runs every (point, seed) pair on a pool of workers, then aggregates.
/// The dataset and references are built once and shared read-only.
pub fn sweep(cfg: &SweepConfig) -> CliResult<Vec<AggregateRow>> {
    cfg.validate()?;
    let root = resolve_out(&cfg.base.out_dir);
    let (dataset, refs) = prepare_data(&cfg.base)?;
    fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
    write_json(&root.join("config.json"), cfg)?;
    write_json(&root.join("refs.json"), &refs)?;
    let manifest = cfg.manifest();
    write_json(&root.join("sweep.json"), &manifest)?;

    let tasks: Vec<(RunConfig, &SweepPoint, u64)> = manifest
        .points
        .iter()
        .flat_map(|p| cfg.base.seeds.iter().map(move |&s| (cfg.point_config(p), p, s)))
        .collect();
    let workers = cfg
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .min(tasks.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((point_cfg, point, seed)) = tasks.get(i) else { break };
                let started = Instant::now();
                let result = run_seed(point_cfg, &dataset, &refs, *seed)
                    .and_then(|(run, summary)| write_seed(&seed_dir(&root.join(&point.dir), *seed), &run, &summary, started));
                if let Err(e) = result {
                    failures.lock().expect("no worker panics while holding the lock").push(format!("{}/seed_{seed}: {e}", point.dir));
                }
            });
        }
    });
    let failures = failures.into_inner().expect("workers joined");
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!("sweep runs failed: {}", failures.join("; "))));
    }
    let rows = aggregate(&root)?;
    write_aggregate_csv(&root.join("aggregate.csv"), &rows)?;
    Ok(rows)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Reads every expected `summary.json` under a sweep root. Runs that are
/// missing are all named in the error.
pub fn aggregate(root: &Path) -> CliResult<Vec<AggregateRow>> {
    let manifest_path = root.join("sweep.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: SweepManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", manifest_path.display())))?;
    let mut missing = Vec::new();
    let mut rows = Vec::new();
    for p in &manifest.points {
        let mut scores = Vec::new();
        for &seed in &manifest.seeds {
            let path = seed_dir(&root.join(&p.dir), seed).join("summary.json");
            match fs::read_to_string(&path) {
                Ok(text) => {
                    let s: SeedSummary = serde_json::from_str(&text)
                        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                    scores.push(s.normalized_score);
                }
                Err(_) => missing.push(format!("{}/seed_{seed}", p.dir)),
            }
        }
        if scores.len() == manifest.seeds.len() {
            let (mean_score, sd_score) = mean_sd(&scores);
            rows.push(AggregateRow {
                method: manifest.method,
                alpha: p.alpha,
                beta: p.beta,
                uniform_samples: p.uniform_samples,
                seeds: scores.len(),
                mean_score,
                sd_score,
            });
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Runtime(format!("incomplete runs: {}", missing.join(", "))));
    }
    Ok(rows)
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
