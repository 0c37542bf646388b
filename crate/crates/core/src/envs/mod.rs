//! Desk-scale environments, behavior policies and offline data generation.

mod bandit;
mod behavior;
mod point_mass;

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use bandit::{BanditEnv, RewardMode};
pub use behavior::{normal_cdf, normal_pdf, BehaviorPolicy, MixtureComponent};
pub use point_mass::{PointMassEnv, PointMassState};

use crate::data::{Dataset, Transition};
use crate::error::{Error, Result};

/// Deterministic map from observation to action.
pub trait Policy {
    fn act(&self, observation: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> Policy for F {
    fn act(&self, observation: &[f64]) -> Vec<f64> {
        self(observation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Environment {
    Bandit(BanditEnv),
    PointMass(PointMassEnv),
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        match self {
            Environment::Bandit(env) => env.validate(),
            Environment::PointMass(env) => env.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Environment::Bandit(_) => "bandit",
            Environment::PointMass(_) => "pointmass",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Environment::Bandit(_) => 1,
            Environment::PointMass(_) => PointMassEnv::STATE_DIM,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Environment::Bandit(_) => 1,
            Environment::PointMass(_) => PointMassEnv::ACTION_DIM,
        }
    }

    pub fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Environment::Bandit(_) => (vec![BanditEnv::ACTION_LOW], vec![BanditEnv::ACTION_HIGH]),
            Environment::PointMass(_) => (
                vec![-PointMassEnv::ACTION_BOUND; 2],
                vec![PointMassEnv::ACTION_BOUND; 2],
            ),
        }
    }

    /// Undiscounted return of one episode. Actions are clipped into the box
    /// first; the bandit episode is a single pull.
    pub fn rollout<P, R>(&self, policy: &P, rng: &mut R) -> Result<f64>
    where
        P: Policy + ?Sized,
        R: Rng + ?Sized,
    {
        let (low, high) = self.action_bounds();
        let clip = |mut a: Vec<f64>| -> Result<Vec<f64>> {
            if a.len() != low.len() || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::ActionOutOfBounds(format!("policy produced {a:?}")));
            }
            for (d, v) in a.iter_mut().enumerate() {
                *v = v.clamp(low[d], high[d]);
            }
            Ok(a)
        };
        match self {
            Environment::Bandit(env) => {
                let a = clip(policy.act(&BanditEnv::STATE))?;
                env.reward(a[0], rng)
            }
            Environment::PointMass(env) => {
                let mut state = env.reset();
                let mut total = 0.0;
                loop {
                    let a = clip(policy.act(&state.observation()))?;
                    let (next, r, done) = env.step(&state, &a)?;
                    total += r;
                    state = next;
                    if done {
                        return Ok(total);
                    }
                }
            }
        }
    }
}

/// Which policy generates the offline data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorSpec {
    /// Truncated Gaussian mixture (bandit).
    Mixture { components: Vec<MixtureComponent> },
    /// The PD controller (point-mass).
    Expert,
    /// Controller plus Gaussian action noise, clipped to the box.
    Medium { noise_sd: f64 },
    /// Alternating expert and medium episodes, expert first.
    Mixed { noise_sd: f64 },
    /// Uniform actions over the box.
    Random,
}

/// Action noise of the "medium" controller.
pub const MEDIUM_NOISE_SD: f64 = 0.3;

impl BehaviorSpec {
    /// Parses a command-line tag. `default` means the bandit mixture for the
    /// bandit and is rejected for the point-mass.
    pub fn from_tag(env: &Environment, tag: &str) -> Result<Self> {
        let spec = match tag {
            "default" | "mixture" => BehaviorSpec::Mixture {
                components: BehaviorPolicy::bandit_default().components().to_vec(),
            },
            "expert" => BehaviorSpec::Expert,
            "medium" => BehaviorSpec::Medium {
                noise_sd: MEDIUM_NOISE_SD,
            },
            "mixed" => BehaviorSpec::Mixed {
                noise_sd: MEDIUM_NOISE_SD,
            },
            "random" => BehaviorSpec::Random,
            other => return Err(Error::Config(format!("unknown behavior spec `{other}`"))),
        };
        spec.check_compatible(env)?;
        Ok(spec)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            BehaviorSpec::Mixture { .. } => "mixture",
            BehaviorSpec::Expert => "expert",
            BehaviorSpec::Medium { .. } => "medium",
            BehaviorSpec::Mixed { .. } => "mixed",
            BehaviorSpec::Random => "random",
        }
    }

    pub fn check_compatible(&self, env: &Environment) -> Result<()> {
        let ok = match (self, env) {
            (BehaviorSpec::Mixture { .. }, Environment::Bandit(_)) => true,
            (BehaviorSpec::Random, _) => true,
            (_, Environment::PointMass(_)) => !matches!(self, BehaviorSpec::Mixture { .. }),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "behavior `{}` is not available for environment `{}`",
                self.tag(),
                env.name()
            )))
        }
    }

    fn noise(&self) -> Result<Option<Normal<f64>>> {
        match self {
            BehaviorSpec::Medium { noise_sd } | BehaviorSpec::Mixed { noise_sd } => Normal::new(0.0, *noise_sd)
                .map(Some)
                .map_err(|e| Error::Config(format!("noise_sd: {e}"))),
            _ => Ok(None),
        }
    }
}

fn uniform_action<R: Rng + ?Sized>(low: &[f64], high: &[f64], rng: &mut R) -> Vec<f64> {
    low.iter().zip(high).map(|(l, h)| rng.random_range(*l..=*h)).collect()
}

/// Rolls the behavior out until exactly `n_transitions` are collected.
///
/// Bandit transitions are independent one-step episodes (`done = true`).
/// Point-mass episodes are cut by the horizon; a horizon cut is not a
/// terminal state, so those transitions keep `done = false`.
pub fn generate_dataset(env: &Environment, behavior: &BehaviorSpec, n_transitions: usize, seed: u64) -> Result<Dataset> {
    if n_transitions == 0 {
        return Err(Error::Config("n_transitions must be positive".into()));
    }
    env.validate()?;
    behavior.check_compatible(env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (low, high) = env.action_bounds();
    let mut transitions = Vec::with_capacity(n_transitions);
    let provenance = format!("{}/{}/n={n_transitions}/seed={seed}", env.name(), behavior.tag());

    match env {
        Environment::Bandit(bandit) => {
            let mixture = match behavior {
                BehaviorSpec::Mixture { components } => {
                    Some(BehaviorPolicy::new(components.clone(), low.clone(), high.clone())?)
                }
                _ => None,
            };
            let state = BanditEnv::STATE.to_vec();
            for _ in 0..n_transitions {
                let action = match &mixture {
                    Some(pol) => pol.sample(&state, &mut rng),
                    None => uniform_action(&low, &high, &mut rng),
                };
                let reward = bandit.reward(action[0], &mut rng)?;
                transitions.push(Transition {
                    state: state.clone(),
                    action,
                    reward,
                    next_state: state.clone(),
                    done: true,
                });
            }
        }
        Environment::PointMass(pm) => {
            let noise = behavior.noise()?;
            let mut episode = 0usize;
            while transitions.len() < n_transitions {
                let noisy = match behavior {
                    BehaviorSpec::Medium { .. } => true,
                    BehaviorSpec::Mixed { .. } => episode % 2 == 1,
                    _ => false,
                };
                let mut state = pm.reset();
                loop {
                    let action = if matches!(behavior, BehaviorSpec::Random) {
                        uniform_action(&low, &high, &mut rng)
                    } else {
                        let mut a = pm.expert_action(&state).to_vec();
                        if let (true, Some(dist)) = (noisy, &noise) {
                            for v in a.iter_mut() {
                                *v = (*v + dist.sample(&mut rng)).clamp(-PointMassEnv::ACTION_BOUND, PointMassEnv::ACTION_BOUND);
                            }
                        }
                        a
                    };
                    let (next, reward, end) = pm.step(&state, &action)?;
                    transitions.push(Transition {
                        state: state.observation(),
                        action,
                        reward,
                        next_state: next.observation(),
                        done: false,
                    });
                    state = next;
                    if end || transitions.len() == n_transitions {
                        break;
                    }
                }
                episode += 1;
            }
        }
    }
    Dataset::new(transitions, low, high, provenance)
}

/// Reference returns mapping raw returns onto the 0–100 normalized scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceReturns {
    pub random: f64,
    pub expert: f64,
}

/// Mean return of a uniform-random policy and of the environment's expert
/// over `episodes` episodes each. The bandit has no controller; its expert
/// reference is the default behavior mixture.
pub fn reference_returns(env: &Environment, episodes: usize, seed: u64) -> Result<ReferenceReturns> {
    if episodes == 0 {
        return Err(Error::Config("reference episodes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (low, high) = env.action_bounds();
    let mut random = 0.0;
    for _ in 0..episodes {
        // actions come from their own stream, rewards from `rng`
        let stream = RefCell::new(ChaCha8Rng::seed_from_u64(rng.random()));
        let uniform = |_: &[f64]| uniform_action(&low, &high, &mut *stream.borrow_mut());
        random += env.rollout(&uniform, &mut rng)?;
    }
    let mut expert = 0.0;
    for _ in 0..episodes {
        expert += match env {
            Environment::Bandit(_) => {
                let pol = BehaviorPolicy::bandit_default();
                let a = pol.sample(&BanditEnv::STATE, &mut rng);
                env.rollout(&|_: &[f64]| a.clone(), &mut rng)?
            }
            Environment::PointMass(pm) => {
                let expert = |obs: &[f64]| pm.expert_action_from_observation(obs).to_vec();
                env.rollout(&expert, &mut rng)?
            }
        };
    }
    Ok(ReferenceReturns {
        random: random / episodes as f64,
        expert: expert / episodes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bandit() -> Environment {
        Environment::Bandit(BanditEnv::default())
    }

    fn point_mass() -> Environment {
        Environment::PointMass(PointMassEnv::default())
    }

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn environment_json_fills_defaults() {
        let env: Environment = serde_json::from_str(r#"{"kind": "point_mass"}"#).unwrap();
        assert_eq!(env, point_mass());
        let env: Environment = serde_json::from_str(r#"{"kind": "bandit", "reward_noise_sd": 0.0}"#).unwrap();
        assert_eq!(env, Environment::Bandit(BanditEnv::default().noiseless()));
        assert!(serde_json::from_str::<Environment>(r#"{"kind": "bandit", "noise": 0.0}"#).is_err());
    }

    #[test]
    fn bandit_dataset_inside_support() {
        let spec = BehaviorSpec::from_tag(&bandit(), "default").unwrap();
        let ds = generate_dataset(&bandit(), &spec, 1000, 3).unwrap();
        let pol = BehaviorPolicy::bandit_default();
        assert_eq!(ds.len(), 1000);
        for t in ds.transitions() {
            assert!(pol.density(&t.state, &t.action) > 0.0);
            assert!(t.done);
            assert_eq!(t.state, t.next_state);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        for (env, tag) in [(bandit(), "default"), (point_mass(), "mixed")] {
            let spec = BehaviorSpec::from_tag(&env, tag).unwrap();
            let a = generate_dataset(&env, &spec, 777, 5).unwrap();
            let b = generate_dataset(&env, &spec, 777, 5).unwrap();
            let c = generate_dataset(&env, &spec, 777, 6).unwrap();
            assert_eq!(bytes(&a), bytes(&b));
            assert_ne!(bytes(&a), bytes(&c));
        }
    }

    #[test]
    fn mixed_returns_form_two_clusters() {
        let env = point_mass();
        let spec = BehaviorSpec::from_tag(&env, "mixed").unwrap();
        let ds = generate_dataset(&env, &spec, 10_000, 1).unwrap();
        assert_eq!(ds.len(), 10_000);
        let returns: Vec<f64> = ds
            .transitions()
            .chunks(100)
            .map(|ep| ep.iter().map(|t| t.reward).sum())
            .collect();
        let expert: Vec<f64> = returns.iter().step_by(2).copied().collect();
        let medium: Vec<f64> = returns.iter().skip(1).step_by(2).copied().collect();
        assert_eq!(expert.len(), 50);
        assert_eq!(medium.len(), 50);
        // the expert is deterministic from a fixed start
        assert!(expert.iter().all(|r| (r - expert[0]).abs() < 1e-9));
        // noisy episodes average about two return units below the expert
        // (sd ≈ 1.1), and only rarely beat it
        let mean_medium = medium.iter().sum::<f64>() / medium.len() as f64;
        assert!(mean_medium < expert[0] - 1.0, "{mean_medium} vs {}", expert[0]);
        let above = medium.iter().filter(|r| **r > expert[0]).count();
        assert!(above <= 5, "{above} noisy episodes beat the expert");
    }

    #[test]
    fn truncation_is_exact() {
        let env = point_mass();
        let ds = generate_dataset(&env, &BehaviorSpec::Expert, 250, 0).unwrap();
        assert_eq!(ds.len(), 250);
        assert!(ds.transitions().iter().all(|t| !t.done));
        // episode boundary after 100 steps restarts from the origin
        assert_eq!(ds.transitions()[100].state, vec![0.0; 4]);
    }

    #[test]
    fn rejects_unknown_or_mismatched_behavior() {
        assert!(BehaviorSpec::from_tag(&bandit(), "sideways").is_err());
        assert!(BehaviorSpec::from_tag(&bandit(), "expert").is_err());
        assert!(BehaviorSpec::from_tag(&point_mass(), "default").is_err());
        assert!(generate_dataset(&point_mass(), &BehaviorSpec::Expert, 0, 0).is_err());
    }

    #[test]
    fn optimum_is_out_of_distribution() {
        let pol = BehaviorPolicy::bandit_default();
        let env = BanditEnv::default();
        let grid: Vec<f64> = (0..=2000).map(|i| -1.0 + i as f64 * 0.001).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| env.mean_reward(*a).total_cmp(&env.mean_reward(*b)))
            .unwrap();
        assert!((best - 0.8).abs() < 1e-3);
        assert!(pol.density(&[0.0], &[0.8]) < 1e-4);
        assert!(pol.density(&[0.0], &[0.2]) > 1.0);
    }

    #[test]
    fn references_bracket_behaviors() {
        let refs = reference_returns(&point_mass(), 100, 0).unwrap();
        assert!(refs.expert > refs.random + 50.0, "{refs:?}");
        assert!((refs.expert + 37.4248).abs() < 1e-3, "{refs:?}");
        let refs = reference_returns(&bandit(), 100, 0).unwrap();
        assert!(refs.expert > refs.random, "{refs:?}");
    }

    #[test]
    fn rollout_clips_actions() {
        let env = Environment::Bandit(BanditEnv::default().noiseless());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = env.rollout(&|_: &[f64]| vec![5.0], &mut rng).unwrap();
        assert_eq!(r, BanditEnv::default().mean_reward(1.0));
        assert!(env.rollout(&|_: &[f64]| vec![f64::NAN], &mut rng).is_err());
    }
}
