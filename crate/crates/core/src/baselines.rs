//! Comparison agents: behavior cloning, unregularized offline TD3, and
//! TD3 with a fixed-weight behavior-cloning penalty on the actor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abr::{
    actor_forward, fit, probe_actor, td_regression, td_target, Agent, CriticStep, EvalHook,
    Method, TargetParams, Td3Params, TrainRun, LAMBDA_Q_FLOOR,
};
use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Bc,
    Td3,
    Td3bc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Penalty weight, read only by `td3bc`.
    #[serde(default = "default_alpha_fixed")]
    pub alpha_fixed: f64,
    #[serde(default)]
    pub td3: Td3Params,
}

fn default_alpha_fixed() -> f64 {
    2.5
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod) -> Self {
        Self {
            method,
            alpha_fixed: default_alpha_fixed(),
            td3: Td3Params::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_fixed >= 0.0 && self.alpha_fixed.is_finite()) {
            return Err(Error::Config("alpha_fixed must be finite and non-negative".into()));
        }
        self.td3.validate()
    }

    pub fn to_method(&self) -> Method {
        match self.method {
            BaselineMethod::Bc => Method::Bc,
            BaselineMethod::Td3 => Method::Td3,
            BaselineMethod::Td3bc => Method::Td3bc {
                alpha: self.alpha_fixed,
            },
        }
    }
}

/// `mean ‖actor(s) − a‖²` and its actor gradient.
pub fn bc_loss(states: &Mat, actions: &Mat, agent: &Agent) -> Result<(f64, Gradients)> {
    let fwd = actor_forward(agent, states)?;
    let n = states.nrows() as f64;
    let diff = &fwd.actions - actions;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("behavior cloning loss".into()));
    }
    let grads = fwd.param_grads(agent, &(&diff * (2.0 / n)))?;
    Ok((loss, grads))
}

/// Plain twin-critic TD regression; the RNG is used only for target noise.
pub fn td3_critic_loss<R: Rng + ?Sized>(
    batch: &Batch,
    agent: &Agent,
    params: &TargetParams,
    rng: &mut R,
) -> Result<CriticStep> {
    let targets = td_target(batch, agent, params, rng)?;
    let c1 = td_regression(&agent.critics[0], batch, &targets)?;
    let c2 = td_regression(&agent.critics[1], batch, &targets)?;
    Ok(CriticStep {
        loss: c1.loss + c2.loss,
        lambda: 0.0,
        q_data: c1.q_mean,
        q_uniform: 0.0,
        grads: [c1.grads, c2.grads],
        targets,
    })
}

#[derive(Clone, Debug)]
pub struct Td3BcActorLoss {
    pub loss: f64,
    pub grads: Gradients,
    /// `1/mean|Q1(s, π(s))|`, floored and treated as a constant.
    pub lambda_n: f64,
    /// Gradient of `−λ_n·mean Q1(s, π(s))` alone.
    pub value_grads: Gradients,
    /// Gradient of `α·mean ‖π(s) − a‖²` alone.
    pub penalty_grads: Gradients,
}

/// `−mean[λ_n·Q1(s, π(s)) − α·‖π(s) − a‖²]`.
pub fn td3bc_actor_loss(batch: &Batch, agent: &Agent, alpha: f64) -> Result<Td3BcActorLoss> {
    let probe = probe_actor(agent, &batch.states)?;
    let n = batch.len() as f64;
    let mean_abs = probe.q.iter().map(|q| q.abs()).sum::<f64>() / n;
    let lambda_n = 1.0 / mean_abs.max(LAMBDA_Q_FLOOR);
    let diff = &probe.forward.actions - &batch.actions;
    let bc = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let loss = -lambda_n * probe.q.sum() / n + alpha * bc;
    if !loss.is_finite() {
        return Err(Error::NonFinite("td3bc actor loss".into()));
    }
    let value_da = &probe.dq_da * (-lambda_n / n);
    let penalty_da = &diff * (2.0 * alpha / n);
    let value_grads = probe.forward.param_grads(agent, &value_da)?;
    let penalty_grads = probe.forward.param_grads(agent, &penalty_da)?;
    let mut grads = value_grads.clone();
    grads.add_assign(&penalty_grads);
    Ok(Td3BcActorLoss {
        loss,
        grads,
        lambda_n,
        value_grads,
        penalty_grads,
    })
}

pub fn train_baseline(dataset: &Dataset, cfg: &BaselineConfig) -> Result<TrainRun> {
    cfg.validate()?;
    fit(dataset, &cfg.to_method(), &cfg.td3, None)
}

pub fn train_baseline_with_eval(
    dataset: &Dataset,
    cfg: &BaselineConfig,
    eval: EvalHook<'_>,
) -> Result<TrainRun> {
    cfg.validate()?;
    fit(dataset, &cfg.to_method(), &cfg.td3, Some(eval))
}
