//! The offline training loop shared by every critic-based method and BC.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::config::{AbrConfig, Td3Params};
use super::losses::{abr_critic_loss, actor_loss, TargetParams, UniformActions};
use crate::baselines::{bc_loss, td3_critic_loss, td3bc_actor_loss};
use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::nn::{adam_step, concat_cols};

/// Losses above this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Stream offsets keep initialization, minibatching and diagnostics apart.
const TRAIN_STREAM: u64 = 0x7f4a_7c15_9e37_79b9;
const METRICS_STREAM: u64 = 0x2545_f491_4f6c_dd1d;

/// Which objectives a run optimizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Abr {
        alpha: f64,
        beta: f64,
        uniform_samples: usize,
    },
    Td3,
    Td3bc {
        alpha: f64,
    },
    Bc,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Abr { .. } => "abr",
            Method::Td3 => "td3",
            Method::Td3bc { .. } => "td3bc",
            Method::Bc => "bc",
        }
    }

    fn has_critic(&self) -> bool {
        !matches!(self, Method::Bc)
    }
}

/// One row of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub step: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// ABR's λ, TD3+BC's value normalizer, 0 otherwise.
    pub lambda: f64,
    /// Mean Q1 on the minibatch's own actions.
    pub q_data: f64,
    /// Mean Q1 on uniformly drawn actions at the minibatch states.
    pub q_uniform: f64,
    pub eval_return: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub agent: Agent,
    pub metrics: Vec<TrainMetrics>,
}

/// Called at every logging step; its value lands in `eval_return`.
pub type EvalHook<'a> = &'a mut dyn FnMut(&Agent) -> Result<f64>;

pub fn train(dataset: &Dataset, cfg: &AbrConfig) -> Result<TrainRun> {
    fit(dataset, &abr_method(cfg), &cfg.td3, None)
}

pub fn train_with_eval(dataset: &Dataset, cfg: &AbrConfig, eval: EvalHook<'_>) -> Result<TrainRun> {
    fit(dataset, &abr_method(cfg), &cfg.td3, Some(eval))
}

fn abr_method(cfg: &AbrConfig) -> Method {
    Method::Abr {
        alpha: cfg.alpha,
        beta: cfg.beta,
        uniform_samples: cfg.uniform_samples,
    }
}

/// Runs `params.total_steps` gradient steps of `method` on `dataset`.
///
/// Critics update every step; the actor and all targets every
/// `policy_delay` steps (BC, having no critic, updates its actor every step).
/// Metrics are logged every `log_every` steps and at the final step.
pub fn fit(
    dataset: &Dataset,
    method: &Method,
    params: &Td3Params,
    mut eval: Option<EvalHook<'_>>,
) -> Result<TrainRun> {
    params.validate()?;
    if let Method::Abr { alpha, beta, uniform_samples } = method {
        AbrConfig {
            alpha: *alpha,
            beta: *beta,
            uniform_samples: *uniform_samples,
            td3: params.clone(),
        }
        .validate()?;
    }
    if let Method::Td3bc { alpha } = method {
        if !(*alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config("alpha_fixed must be finite and non-negative".into()));
        }
    }
    let mut agent = Agent::new(
        dataset.state_dim(),
        dataset.action_low(),
        dataset.action_high(),
        &params.hidden_sizes,
        params.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ TRAIN_STREAM);
    let mut diag_rng = ChaCha8Rng::seed_from_u64(params.seed ^ METRICS_STREAM);
    let targets = TargetParams {
        gamma: params.gamma,
        policy_noise_sd: params.policy_noise_sd,
        noise_clip: params.noise_clip,
        clip_reward: params.clip_targets.then(|| dataset.max_abs_reward()),
    };
    let mut metrics = Vec::new();
    let (mut critic_loss, mut last_actor_loss, mut lambda) = (0.0, 0.0, 0.0);

    for step in 1..=params.total_steps {
        let batch = dataset.sample_batch(params.batch_size, &mut rng)?;
        if method.has_critic() {
            let out = match method {
                Method::Abr { alpha, beta, uniform_samples } => {
                    abr_critic_loss(&batch, &agent, &targets, *alpha, *beta, *uniform_samples, &mut rng)?
                }
                _ => td3_critic_loss(&batch, &agent, &targets, &mut rng)?,
            };
            guard(step, out.loss)?;
            critic_loss = out.loss;
            if let Method::Abr { .. } = method {
                lambda = out.lambda;
            }
            for k in 0..2 {
                adam_step(&mut agent.critics[k], &out.grads[k], &mut agent.critic_opts[k], params.lr_critic)?;
            }
        }
        agent.step = step;
        let actor_turn = !method.has_critic() || step % params.policy_delay == 0;
        if actor_turn {
            let (loss, grads) = match method {
                Method::Bc => bc_loss(&batch.states, &batch.actions, &agent)?,
                Method::Td3bc { alpha } => {
                    let out = td3bc_actor_loss(&batch, &agent, *alpha)?;
                    lambda = out.lambda_n;
                    (out.loss, out.grads)
                }
                _ => actor_loss(&batch.states, &agent)?,
            };
            guard(step, loss)?;
            last_actor_loss = loss;
            adam_step(&mut agent.actor, &grads, &mut agent.actor_opt, params.lr_actor)?;
            if method.has_critic() {
                agent.update_targets(params.tau)?;
            }
        }
        if step % params.log_every == 0 || step == params.total_steps {
            let (q_data, q_uniform) = if method.has_critic() {
                q_diagnostics(&batch, &agent, &mut diag_rng)?
            } else {
                (0.0, 0.0)
            };
            let eval_return = match eval.as_mut() {
                Some(hook) => Some(hook(&agent)?),
                None => None,
            };
            metrics.push(TrainMetrics {
                step,
                critic_loss,
                actor_loss: last_actor_loss,
                lambda,
                q_data,
                q_uniform,
                eval_return,
            });
        }
    }
    Ok(TrainRun { agent, metrics })
}

fn guard(step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss.abs() > DIVERGENCE_LIMIT {
        return Err(Error::Diverged { step, loss });
    }
    Ok(())
}

fn q_diagnostics(batch: &Batch, agent: &Agent, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let q_data = agent.q_values(0, &batch.states, &batch.actions)?.mean().unwrap_or(0.0);
    let uniform = UniformActions::draw(batch.len(), 1, agent.action_low(), agent.action_high(), rng);
    let input = concat_cols(&batch.states, &uniform.actions)?;
    let q_uniform = agent.critics[0].predict(&input)?.mean().unwrap_or(0.0);
    Ok((q_data, q_uniform))
}

/// Writes the metrics stream as CSV with the column order of [`TrainMetrics`].
pub fn write_metrics_csv<W: Write>(metrics: &[TrainMetrics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "step",
        "critic_loss",
        "actor_loss",
        "lambda",
        "q_data",
        "q_uniform",
        "eval_return",
    ])
    .map_err(csv_error)?;
    for m in metrics {
        w.write_record([
            m.step.to_string(),
            m.critic_loss.to_string(),
            m.actor_loss.to_string(),
            m.lambda.to_string(),
            m.q_data.to_string(),
            m.q_uniform.to_string(),
            m.eval_return.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a stream written by [`write_metrics_csv`].
pub fn read_metrics_csv<R: std::io::Read>(reader: R) -> Result<Vec<TrainMetrics>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
