//! Policy evaluation and score normalization.

use rand::Rng;

use crate::envs::{Environment, Policy, ReferenceReturns};
use crate::error::{Error, Result};

/// Mean undiscounted return over `episodes` deterministic rollouts.
pub fn evaluate_policy<P, R>(env: &Environment, policy: &P, episodes: usize, rng: &mut R) -> Result<f64>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let mut total = 0.0;
    for _ in 0..episodes {
        total += env.rollout(policy, rng)?;
    }
    Ok(total / episodes as f64)
}

/// `100·(raw − random)/(expert − random)`.
pub fn normalized_score(raw: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    let span = expert_ref - random_ref;
    if !span.is_finite() || span == 0.0 || !raw.is_finite() {
        return Err(Error::Config(format!(
            "degenerate references random={random_ref} expert={expert_ref}"
        )));
    }
    Ok(100.0 * (raw - random_ref) / span)
}

impl ReferenceReturns {
    pub fn normalize(&self, raw: f64) -> Result<f64> {
        normalized_score(raw, self.random, self.expert)
    }
}
