//! Actor, twin critics and their slowly blended target copies.

use std::path::Path;

use ndarray::{Array1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::Policy;
use crate::error::{Error, Result};
use crate::nn::{concat_cols, polyak_update, Activation, AdamState, Mat, Mlp};

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub(crate) actor_opt: AdamState,
    pub(crate) critic_opts: [AdamState; 2],
    action_low: Vec<f64>,
    action_high: Vec<f64>,
    /// Gradient steps taken.
    pub step: usize,
}

impl Agent {
    /// Relu trunks; tanh actor head rescaled to the action box, identity
    /// critic heads on `[state, action]`. Targets start as exact copies.
    pub fn new(
        state_dim: usize,
        action_low: &[f64],
        action_high: &[f64],
        hidden_sizes: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let action_dim = action_low.len();
        if action_dim == 0
            || action_high.len() != action_dim
            || action_low.iter().zip(action_high).any(|(l, h)| !(l < h))
        {
            return Err(Error::Config(format!("bad action box {action_low:?}..{action_high:?}")));
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let sizes = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend_from_slice(hidden_sizes);
            v.push(output);
            v
        };
        let actor = Mlp::new(
            &sizes(state_dim, action_dim),
            Activation::Relu,
            Activation::Tanh,
            seeds.random(),
        )?;
        let critic_sizes = sizes(state_dim + action_dim, 1);
        let c1 = Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, seeds.random())?;
        let c2 = Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, seeds.random())?;
        Ok(Self {
            actor_opt: AdamState::new(&actor),
            critic_opts: [AdamState::new(&c1), AdamState::new(&c2)],
            actor_target: actor.clone(),
            critic_targets: [c1.clone(), c2.clone()],
            actor,
            critics: [c1, c2],
            action_low: action_low.to_vec(),
            action_high: action_high.to_vec(),
            step: 0,
        })
    }

    pub fn action_low(&self) -> &[f64] {
        &self.action_low
    }

    pub fn action_high(&self) -> &[f64] {
        &self.action_high
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    /// Half-width of the action box per coordinate.
    pub fn action_half_range(&self) -> Array1<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (h - l))
            .collect()
    }

    fn action_mid(&self) -> Array1<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (h + l))
            .collect()
    }

    /// Maps the actor's tanh output in `[−1, 1]` onto the action box. The
    /// clip only absorbs rounding at a saturated head.
    pub fn scale_actions(&self, squashed: &Mat) -> Mat {
        let mut actions = squashed * &self.action_half_range() + &self.action_mid();
        self.clip_actions(&mut actions);
        actions
    }

    pub fn act_batch(&self, states: &Mat) -> Result<Mat> {
        Ok(self.scale_actions(&self.actor.predict(states)?))
    }

    pub fn target_act_batch(&self, states: &Mat) -> Result<Mat> {
        Ok(self.scale_actions(&self.actor_target.predict(states)?))
    }

    /// Q-values of online critic `which` as a column vector.
    pub fn q_values(&self, which: usize, states: &Mat, actions: &Mat) -> Result<Array1<f64>> {
        let out = self.critics[which].predict(&concat_cols(states, actions)?)?;
        Ok(out.index_axis_move(Axis(1), 0))
    }

    pub fn clip_actions(&self, actions: &mut Mat) {
        for mut row in actions.rows_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                *v = v.clamp(self.action_low[d], self.action_high[d]);
            }
        }
    }

    /// Blends every target network toward its online network.
    pub fn update_targets(&mut self, tau: f64) -> Result<()> {
        polyak_update(&mut self.actor_target, &self.actor, tau)?;
        for k in 0..2 {
            polyak_update(&mut self.critic_targets[k], &self.critics[k], tau)?;
        }
        Ok(())
    }
}

impl Agent {
    /// A standalone copy of the actor.
    pub fn policy(&self) -> ActorPolicy {
        ActorPolicy {
            actor: self.actor.clone(),
            low: self.action_low.clone(),
            high: self.action_high.clone(),
        }
    }

    /// Writes the online networks as `actor.json`, `critic1.json` and
    /// `critic2.json` under `dir`.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.actor.save(dir.join("actor.json"))?;
        self.critics[0].save(dir.join("critic1.json"))?;
        self.critics[1].save(dir.join("critic2.json"))
    }
}

impl Policy for Agent {
    fn act(&self, observation: &[f64]) -> Vec<f64> {
        single_row(observation, |s| self.act_batch(s), self.action_dim())
    }
}

fn single_row(observation: &[f64], f: impl Fn(&Mat) -> Result<Mat>, action_dim: usize) -> Vec<f64> {
    let state = Mat::from_shape_vec((1, observation.len()), observation.to_vec()).expect("one row");
    match f(&state) {
        Ok(a) => a.row(0).to_vec(),
        // the rollout rejects non-finite actions with a proper error
        Err(_) => vec![f64::NAN; action_dim],
    }
}

/// A tanh-headed actor mapped onto an action box.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorPolicy {
    actor: Mlp,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActorPolicy {
    pub fn new(actor: Mlp, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if actor.output_dim() != low.len() || high.len() != low.len() {
            return Err(Error::Architecture(format!(
                "actor emits {} actions, box has {}",
                actor.output_dim(),
                low.len()
            )));
        }
        if actor.output_activation() != Activation::Tanh {
            return Err(Error::Architecture("actor head must be tanh".into()));
        }
        Ok(Self { actor, low, high })
    }

    pub fn load(path: impl AsRef<Path>, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        Self::new(Mlp::load(path)?, low, high)
    }

    pub fn act_batch(&self, states: &Mat) -> Result<Mat> {
        let squashed = self.actor.predict(states)?;
        let half: Array1<f64> = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect();
        let mid: Array1<f64> = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h + l)).collect();
        let mut actions = squashed * &half + &mid;
        for mut row in actions.rows_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                *v = v.clamp(self.low[d], self.high[d]);
            }
        }
        Ok(actions)
    }
}

impl Policy for ActorPolicy {
    fn act(&self, observation: &[f64]) -> Vec<f64> {
        single_row(observation, |s| self.act_batch(s), self.low.len())
    }
}
