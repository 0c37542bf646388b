//! One-dimensional continuous bandit on `[−1, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian bump `height·exp(−(a−center)²/(2·width²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardMode {
    pub center: f64,
    pub height: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditEnv {
    pub reward_modes: Vec<RewardMode>,
    pub reward_noise_sd: f64,
}

impl Default for BanditEnv {
    /// A supported bump at 0.2 and a taller, unsupported one at 0.8.
    fn default() -> Self {
        Self {
            reward_modes: vec![
                RewardMode {
                    center: 0.2,
                    height: 0.6,
                    width: 0.1,
                },
                RewardMode {
                    center: 0.8,
                    height: 1.0,
                    width: 0.05,
                },
            ],
            reward_noise_sd: 0.05,
        }
    }
}

impl BanditEnv {
    pub const ACTION_LOW: f64 = -1.0;
    pub const ACTION_HIGH: f64 = 1.0;

    /// The bandit's only state.
    pub const STATE: [f64; 1] = [0.0];

    pub fn validate(&self) -> Result<()> {
        if self.reward_modes.iter().any(|m| !(m.width > 0.0)) {
            return Err(Error::Config("reward mode widths must be positive".into()));
        }
        if !(self.reward_noise_sd >= 0.0) {
            return Err(Error::Config("reward noise sd must be non-negative".into()));
        }
        Ok(())
    }

    pub fn noiseless(mut self) -> Self {
        self.reward_noise_sd = 0.0;
        self
    }

    pub fn mean_reward(&self, action: f64) -> f64 {
        self.reward_modes
            .iter()
            .map(|m| {
                let d = action - m.center;
                m.height * (-d * d / (2.0 * m.width * m.width)).exp()
            })
            .sum()
    }

    /// Mean reward plus Gaussian observation noise. No random number is
    /// drawn when the noise is off.
    pub fn reward<R: Rng + ?Sized>(&self, action: f64, rng: &mut R) -> Result<f64> {
        if !(Self::ACTION_LOW..=Self::ACTION_HIGH).contains(&action) {
            return Err(Error::ActionOutOfBounds(format!("bandit action {action}")));
        }
        let mean = self.mean_reward(action);
        if self.reward_noise_sd == 0.0 {
            return Ok(mean);
        }
        let noise = Normal::new(0.0, self.reward_noise_sd)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng);
        Ok(mean + noise)
    }

    /// Largest reward bound over the box (bump heights summed) plus a
    /// generous noise margin.
    pub fn reward_bound(&self) -> f64 {
        self.reward_modes.iter().map(|m| m.height.abs()).sum::<f64>() + 6.0 * self.reward_noise_sd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn supported_mode_value() {
        let env = BanditEnv::default().noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = env.reward(0.2, &mut rng).unwrap();
        assert_eq!(r, 0.6 + (-72.0f64).exp());
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unsupported_mode_value() {
        let env = BanditEnv::default().noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = env.reward(0.8, &mut rng).unwrap();
        assert!((r - (1.0 + 0.6 * (-18.0f64).exp())).abs() < 1e-15);
        assert!((r - 1.0).abs() < 1e-7);
    }

    #[test]
    fn noiseless_is_deterministic() {
        let env = BanditEnv::default().noiseless();
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(env.reward(0.37, &mut a).unwrap(), env.reward(0.37, &mut b).unwrap());
    }

    #[test]
    fn noise_has_requested_spread() {
        let env = BanditEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| env.reward(0.0, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - env.mean_reward(0.0)).abs() < 0.002);
        assert!((sd - 0.05).abs() < 0.002);
    }

    #[test]
    fn out_of_bounds_action() {
        let env = BanditEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(env.reward(1.2, &mut rng), Err(Error::ActionOutOfBounds(_))));
    }

    #[test]
    fn rejects_zero_width() {
        let mut env = BanditEnv::default();
        env.reward_modes[0].width = 0.0;
        assert!(env.validate().is_err());
    }
}
