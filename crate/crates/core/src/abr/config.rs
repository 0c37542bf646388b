use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings of the TD3 backbone shared by every critic-based agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Params {
    pub gamma: f64,
    pub tau: f64,
    /// Target-smoothing noise, as a fraction of the action half-range.
    pub policy_noise_sd: f64,
    /// Clip on the target-smoothing noise, same units.
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub batch_size: usize,
    pub total_steps: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Clip TD targets to `±R_max/(1−γ)`, with `R_max` the dataset's largest |r|.
    pub clip_targets: bool,
    pub hidden_sizes: Vec<usize>,
    /// Metrics cadence in gradient steps.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for Td3Params {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            policy_noise_sd: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            batch_size: 256,
            total_steps: 1_000_000,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            clip_targets: true,
            hidden_sizes: vec![256, 256],
            log_every: 5000,
            seed: 0,
        }
    }
}

impl Td3Params {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(what.to_string()))
            }
        };
        check((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)")?;
        check(self.tau > 0.0 && self.tau <= 1.0, "tau must lie in (0, 1]")?;
        check(self.policy_noise_sd >= 0.0, "policy_noise_sd must be non-negative")?;
        check(self.noise_clip >= 0.0, "noise_clip must be non-negative")?;
        check(self.policy_delay >= 1, "policy_delay must be at least 1")?;
        check(self.batch_size >= 1, "batch_size must be at least 1")?;
        check(self.lr_actor > 0.0 && self.lr_critic > 0.0, "learning rates must be positive")?;
        check(!self.hidden_sizes.contains(&0), "hidden sizes must be positive")?;
        check(self.log_every >= 1, "log_every must be at least 1")?;
        Ok(())
    }
}

/// Hyperparameters of the adaptively regularized critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbrConfig {
    /// Weight of the uniform-action regression term.
    pub alpha: f64,
    /// Multiplier in `λ = β·range²/E|Q|`.
    pub beta: f64,
    /// Uniform actions drawn per transition.
    pub uniform_samples: usize,
    pub td3: Td3Params,
}

impl Default for AbrConfig {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            beta: 1.0,
            uniform_samples: 1,
            td3: Td3Params::default(),
        }
    }
}

impl AbrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be finite and non-negative".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("beta must be finite and non-negative".into()));
        }
        if self.uniform_samples == 0 {
            return Err(Error::Config("uniform_samples must be at least 1".into()));
        }
        self.td3.validate()
    }
}
