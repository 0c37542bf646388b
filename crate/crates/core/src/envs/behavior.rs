//! Truncated Gaussian-mixture behavior policy with an exact density.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// One diagonal Gaussian component; `mean` and `sd` have one entry per
/// action coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Mixture of diagonal Gaussians, each truncated to the action box and
/// renormalized separately.
///
/// The mixture does not depend on the state: both environments that use it
/// present a single fixed state, so `state` arguments are accepted for
/// interface uniformity and ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorPolicy {
    components: Vec<MixtureComponent>,
    low: Vec<f64>,
    high: Vec<f64>,
    /// Probability mass of each untruncated component inside the box.
    masses: Vec<f64>,
}

/// Components whose in-box mass falls below this are rejected; rejection
/// sampling would otherwise stall.
const MIN_COMPONENT_MASS: f64 = 1e-6;

impl BehaviorPolicy {
    pub fn new(components: Vec<MixtureComponent>, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let dim = low.len();
        if dim == 0 || high.len() != dim || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::Config(format!("bad action box {low:?}..{high:?}")));
        }
        if components.is_empty() {
            return Err(Error::Config("behavior mixture has no components".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(Error::Config(format!("mixture weights must be non-negative and sum to 1, got {total}")));
        }
        let mut masses = Vec::with_capacity(components.len());
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.sd.len() != dim {
                return Err(Error::Config(format!("component {k} has wrong dimension")));
            }
            if c.sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::Config(format!("component {k} needs positive finite sd")));
            }
            let mass: f64 = (0..dim)
                .map(|d| {
                    normal_cdf((high[d] - c.mean[d]) / c.sd[d]) - normal_cdf((low[d] - c.mean[d]) / c.sd[d])
                })
                .product();
            if mass < MIN_COMPONENT_MASS {
                return Err(Error::Config(format!("component {k} has almost no mass inside the box")));
            }
            masses.push(mass);
        }
        Ok(Self {
            components,
            low,
            high,
            masses,
        })
    }

    /// `0.5·N(0.2, 0.08²) + 0.5·N(−0.3, 0.10²)` truncated to `[−1, 1]`.
    pub fn bandit_default() -> Self {
        Self::new(
            vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![0.2],
                    sd: vec![0.08],
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![-0.3],
                    sd: vec![0.10],
                },
            ],
            vec![-1.0],
            vec![1.0],
        )
        .expect("default mixture is valid")
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    fn inside(&self, action: &[f64]) -> bool {
        action.len() == self.low.len()
            && action
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(a, (l, h))| *a >= *l && *a <= *h)
    }

    /// π_β(a|s); zero outside the action box.
    pub fn density(&self, _state: &[f64], action: &[f64]) -> f64 {
        if !self.inside(action) {
            return 0.0;
        }
        self.components
            .iter()
            .zip(&self.masses)
            .map(|(c, mass)| {
                let joint: f64 = action
                    .iter()
                    .zip(c.mean.iter().zip(&c.sd))
                    .map(|(a, (m, s))| normal_pdf((a - m) / s) / s)
                    .product();
                c.weight * joint / mass
            })
            .sum()
    }

    /// Marginal CDF of coordinate `dim` of the truncated mixture.
    pub fn marginal_cdf(&self, dim: usize, x: f64) -> f64 {
        let (lo, hi) = (self.low[dim], self.high[dim]);
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        self.components
            .iter()
            .map(|c| {
                let (m, s) = (c.mean[dim], c.sd[dim]);
                let below = normal_cdf((lo - m) / s);
                let z = normal_cdf((hi - m) / s) - below;
                c.weight * (normal_cdf((x - m) / s) - below) / z
            })
            .sum()
    }

    /// Picks a component by weight, then draws from it by rejection until
    /// the draw lands inside the box.
    pub fn sample<R: Rng + ?Sized>(&self, _state: &[f64], rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = k;
                break;
            }
        }
        let c = &self.components[chosen];
        loop {
            let draw: Vec<f64> = c
                .mean
                .iter()
                .zip(&c.sd)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect();
            if self.inside(&draw) {
                return draw;
            }
        }
    }
}
