//! Damped planar point mass driven toward a goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassEnv {
    pub dt: f64,
    pub damping: f64,
    pub goal: [f64; 2],
    pub start: [f64; 2],
    pub horizon: usize,
    /// Proportional gain of the expert controller.
    pub k_p: f64,
    /// Derivative gain of the expert controller.
    pub k_d: f64,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self {
            dt: 0.05,
            damping: 0.99,
            goal: [1.0, 1.0],
            start: [0.0, 0.0],
            horizon: 100,
            k_p: 2.0,
            k_d: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMassState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    /// Steps taken so far in the episode.
    pub t: usize,
}

impl PointMassState {
    /// Observation fed to networks: `[px, py, vx, vy]`.
    pub fn observation(&self) -> Vec<f64> {
        vec![self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }
}

impl PointMassEnv {
    pub const POSITION_BOUND: f64 = 2.0;
    pub const ACTION_BOUND: f64 = 1.0;
    pub const STATE_DIM: usize = 4;
    pub const ACTION_DIM: usize = 2;

    pub fn validate(&self) -> Result<()> {
        let finite = [self.dt, self.damping, self.k_p, self.k_d]
            .iter()
            .chain(&self.goal)
            .chain(&self.start)
            .all(|v| v.is_finite());
        if !finite || !(self.dt > 0.0) || self.horizon == 0 {
            return Err(Error::Config("point-mass needs finite constants, dt > 0 and horizon ≥ 1".into()));
        }
        let inside = |p: &[f64; 2]| p.iter().all(|v| v.abs() <= Self::POSITION_BOUND);
        if !inside(&self.goal) || !inside(&self.start) {
            return Err(Error::Config("goal and start must lie inside the arena".into()));
        }
        Ok(())
    }

    pub fn reset(&self) -> PointMassState {
        PointMassState {
            position: self.start,
            velocity: [0.0, 0.0],
            t: 0,
        }
    }

    fn distance_to_goal(&self, position: &[f64; 2]) -> f64 {
        ((position[0] - self.goal[0]).powi(2) + (position[1] - self.goal[1]).powi(2)).sqrt()
    }

    /// Semi-implicit Euler step; reward is the negative distance to the goal
    /// after moving, and `done` flags the end of the horizon.
    pub fn step(&self, state: &PointMassState, action: &[f64]) -> Result<(PointMassState, f64, bool)> {
        if action.len() != Self::ACTION_DIM
            || action.iter().any(|a| !(a.abs() <= Self::ACTION_BOUND))
        {
            return Err(Error::ActionOutOfBounds(format!("point-mass action {action:?}")));
        }
        let mut next = *state;
        #[allow(clippy::needless_range_loop)]
        for d in 0..2 {
            next.velocity[d] = self.damping * state.velocity[d] + self.dt * action[d];
            next.position[d] = (state.position[d] + self.dt * next.velocity[d])
                .clamp(-Self::POSITION_BOUND, Self::POSITION_BOUND);
        }
        next.t = state.t + 1;
        let reward = -self.distance_to_goal(&next.position);
        Ok((next, reward, next.t >= self.horizon))
    }

    /// Saturated PD law toward the goal.
    pub fn expert_action(&self, state: &PointMassState) -> [f64; 2] {
        self.expert_action_from_observation(&state.observation())
    }

    pub fn expert_action_from_observation(&self, obs: &[f64]) -> [f64; 2] {
        let mut a = [0.0; 2];
        for d in 0..2 {
            let u = self.k_p * (self.goal[d] - obs[d]) - self.k_d * obs[2 + d];
            a[d] = u.clamp(-Self::ACTION_BOUND, Self::ACTION_BOUND);
        }
        a
    }
}
