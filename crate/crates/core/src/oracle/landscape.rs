//! Learned objective over the bandit's action grid, and the split of a
//! penalized actor gradient into its value and penalty parts.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::ActionGrid;
use crate::abr::{fit, probe_actor, Agent, Method, Td3Params, LAMBDA_Q_FLOOR};
use crate::data::{Batch, Dataset};
use crate::envs::{BanditEnv, BehaviorPolicy};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandscapeMethod {
    Abr,
    Td3bc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub method: LandscapeMethod,
    /// ABR's α or TD3+BC's fixed weight, one curve per value and seed.
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub beta: f64,
    pub uniform_samples: usize,
    pub n_bins: usize,
    /// Network and optimizer settings; `total_steps` and `seed` are replaced.
    pub td3: Td3Params,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            method: LandscapeMethod::Abr,
            alphas: vec![0.05, 0.15, 0.4],
            seeds: vec![0, 1, 2, 3],
            steps: 2000,
            beta: 1.0,
            uniform_samples: 1,
            n_bins: ActionGrid::DEFAULT_BINS,
            td3: Td3Params::default(),
        }
    }
}

impl LandscapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("landscape needs at least one alpha and one seed".into()));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::Config("alphas must be finite and non-negative".into()));
        }
        if self.n_bins == 0 {
            return Err(Error::Config("n_bins must be positive".into()));
        }
        self.td3.validate()
    }

    fn method(&self, alpha: f64) -> Method {
        match self.method {
            LandscapeMethod::Abr => Method::Abr {
                alpha,
                beta: self.beta,
                uniform_samples: self.uniform_samples,
            },
            LandscapeMethod::Td3bc => Method::Td3bc { alpha },
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub alpha: f64,
    pub seed: u64,
    pub action: f64,
    pub objective_value: f64,
    pub behavior_density: f64,
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeCurve {
    pub alpha: f64,
    pub seed: u64,
    pub points: Vec<LandscapePoint>,
}

impl LandscapeCurve {
    /// Highest-valued grid point (first one on ties).
    pub fn argmax(&self) -> &LandscapePoint {
        self.points
            .iter()
            .fold(&self.points[0], |best, p| if p.objective_value > best.objective_value { p } else { best })
    }
}

/// Trains one agent per (α, seed) on bandit data and evaluates the actor's
/// effective objective on the grid: `Q1(s, a)` for ABR,
/// `λ_n·Q1(s, a) − α·mean_data (a − a_data)²` for TD3+BC.
pub fn landscape(
    dataset: &Dataset,
    behavior: &BehaviorPolicy,
    env: &BanditEnv,
    cfg: &LandscapeConfig,
) -> Result<Vec<LandscapeCurve>> {
    cfg.validate()?;
    if dataset.action_dim() != 1 {
        return Err(Error::Dataset("landscape needs one-dimensional actions".into()));
    }
    let grid = ActionGrid::new(cfg.n_bins, dataset.action_low()[0], dataset.action_high()[0])?;
    let state = dataset.transitions()[0].state.clone();
    let full = dataset.full_batch();
    let mut curves = Vec::new();
    for &alpha in &cfg.alphas {
        for &seed in &cfg.seeds {
            let params = Td3Params {
                total_steps: cfg.steps,
                seed,
                ..cfg.td3.clone()
            };
            let run = fit(dataset, &cfg.method(alpha), &params, None)?;
            let values = objective_on_grid(&run.agent, &grid, &state, &full, cfg.method, alpha)?;
            let points = grid
                .centers
                .iter()
                .zip(values)
                .map(|(&a, v)| LandscapePoint {
                    alpha,
                    seed,
                    action: a,
                    objective_value: v,
                    behavior_density: behavior.density(&state, &[a]),
                    mean_reward: env.mean_reward(a),
                })
                .collect();
            curves.push(LandscapeCurve { alpha, seed, points });
        }
    }
    Ok(curves)
}

fn objective_on_grid(
    agent: &Agent,
    grid: &ActionGrid,
    state: &[f64],
    data: &Batch,
    method: LandscapeMethod,
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = grid.n_bins();
    let states = Mat::from_shape_fn((n, state.len()), |(_, j)| state[j]);
    let actions = Mat::from_shape_vec((n, 1), grid.centers.clone()).expect("one column");
    let q = agent.q_values(0, &states, &actions)?;
    let values = match method {
        LandscapeMethod::Abr => q.to_vec(),
        LandscapeMethod::Td3bc => {
            let policy_actions = agent.act_batch(&data.states)?;
            let q_pi = agent.q_values(0, &data.states, &policy_actions)?;
            let lambda_n = 1.0 / q_pi.mapv(f64::abs).mean().unwrap_or(0.0).max(LAMBDA_Q_FLOOR);
            let taken = data.actions.column(0);
            let m = taken.len() as f64;
            grid.centers
                .iter()
                .zip(&q)
                .map(|(a, q)| lambda_n * q - alpha * taken.iter().map(|d| (a - d) * (a - d)).sum::<f64>() / m)
                .collect()
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("landscape objective".into()));
    }
    Ok(values)
}

pub fn write_landscape_csv<W: Write>(curves: &[LandscapeCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for curve in curves {
        for p in &curve.points {
            w.serialize(p).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GradientDecomposition {
    /// Per-sample norm of the value contribution `−λ_n·∇_a Q1·∇_θ π / n`.
    pub value_norms: Vec<f64>,
    /// Per-sample norm of the penalty contribution `2α(π(s) − a)·∇_θ π / n`.
    pub penalty_norms: Vec<f64>,
    /// Sum over samples of the value contributions.
    pub value_total: Gradients,
    /// Sum over samples of the penalty contributions.
    pub penalty_total: Gradients,
}

/// Splits the TD3+BC actor gradient sample by sample.
pub fn gradient_decomposition(agent: &Agent, batch: &Batch, alpha: f64) -> Result<GradientDecomposition> {
    let probe = probe_actor(agent, &batch.states)?;
    let n = batch.len() as f64;
    let lambda_n = 1.0 / (probe.q.iter().map(|q| q.abs()).sum::<f64>() / n).max(LAMBDA_Q_FLOOR);
    let value_da = &probe.dq_da * (-lambda_n / n);
    let penalty_da = (&probe.forward.actions - &batch.actions) * (2.0 * alpha / n);
    let mut out = GradientDecomposition {
        value_norms: Vec::with_capacity(batch.len()),
        penalty_norms: Vec::with_capacity(batch.len()),
        value_total: Gradients::zeros_like(&agent.actor),
        penalty_total: Gradients::zeros_like(&agent.actor),
    };
    for i in 0..batch.len() {
        for (da, norms, total) in [
            (&value_da, &mut out.value_norms, &mut out.value_total),
            (&penalty_da, &mut out.penalty_norms, &mut out.penalty_total),
        ] {
            let mut row_only = Mat::zeros(da.raw_dim());
            row_only.row_mut(i).assign(&da.row(i));
            let g = probe.forward.param_grads(agent, &row_only)?;
            norms.push(g.l2_norm());
            total.add_assign(&g);
        }
    }
    Ok(out)
}
