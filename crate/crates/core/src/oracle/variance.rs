//! Variance of the regularized regression target.
//!
//! At a single (s, a) the critic is regressed onto `Q_π` with weight `π_β`
//! and onto `Q̃` with weight `αu`, so the effective target is a two-point
//! mixture taking `Q_π` with probability `π_β/(π_β+αu)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::GridProblem;
use crate::error::{Error, Result};

fn check_weights(pi: f64, alpha_u: f64) -> Result<()> {
    if !(pi >= 0.0 && pi.is_finite()) || !(alpha_u > 0.0 && alpha_u.is_finite()) {
        return Err(Error::Oracle(format!("need π_β ≥ 0 and αu > 0, got {pi}, {alpha_u}")));
    }
    Ok(())
}

/// Variance of the two-point target: `π_β·αu/(π_β+αu)²·(Q_π − Q̃)²`.
pub fn variance_y(pi: f64, alpha_u: f64, q_pi: f64, q_tilde: f64) -> Result<f64> {
    check_weights(pi, alpha_u)?;
    let total = pi + alpha_u;
    let d = q_pi - q_tilde;
    Ok(pi * alpha_u / (total * total) * d * d)
}

/// The same variance scaled by the total regression weight `π_β + αu`:
/// `αu·π_β/(π_β+αu)·(Q_π − Q̃)²`. This is the per-action contribution when
/// actions are integrated against that weight.
pub fn mass_weighted_variance_y(pi: f64, alpha_u: f64, q_pi: f64, q_tilde: f64) -> Result<f64> {
    Ok((pi + alpha_u) * variance_y(pi, alpha_u, q_pi, q_tilde)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloVariance {
    pub variance: f64,
    /// Standard error of `variance`, from the sample fourth moment.
    pub std_error: f64,
}

/// Sample variance of `draws` independent two-point targets.
pub fn monte_carlo_variance_y<R: Rng + ?Sized>(
    pi: f64,
    alpha_u: f64,
    q_pi: f64,
    q_tilde: f64,
    draws: usize,
    rng: &mut R,
) -> Result<MonteCarloVariance> {
    check_weights(pi, alpha_u)?;
    if draws < 2 {
        return Err(Error::Oracle("need at least two draws".into()));
    }
    let p = pi / (pi + alpha_u);
    let ys: Vec<f64> = (0..draws)
        .map(|_| if rng.random::<f64>() < p { q_pi } else { q_tilde })
        .collect();
    let n = draws as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for y in &ys {
        let d2 = (y - mean) * (y - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = m2 / (n - 1.0);
    let (m2, m4) = (m2 / n, m4 / n);
    Ok(MonteCarloVariance {
        variance,
        std_error: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
    })
}

/// Constant baseline `c` subtracted from `Q_π`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    Zero,
    /// `∫π_β·Q_π / ∫π_β`.
    BehaviorMean,
    Custom(f64),
}

/// `∫π_β·Q / ∫π_β` on the problem's grid.
pub fn behavior_mean(p: &GridProblem, q: &[f64]) -> Result<f64> {
    let mass = p.grid.integrate(p.behavior.iter().copied());
    if !(mass > 0.0) {
        return Err(Error::Oracle("behavior density has no mass".into()));
    }
    Ok(p.grid.integrate(p.behavior.iter().zip(q).map(|(pi, q)| pi * q)) / mass)
}

/// `f(a) = λ·∫π_β(a')·(a − a')² da'` on the problem's grid.
pub fn energy_penalty(p: &GridProblem, lambda: f64) -> Vec<f64> {
    let g = &p.grid;
    g.centers
        .iter()
        .map(|a| {
            lambda
                * g.integrate(
                    g.centers
                        .iter()
                        .zip(&p.behavior)
                        .map(|(b, pi)| pi * (a - b) * (a - b)),
                )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedVariance {
    pub c: f64,
    /// `(αu/2)·∫π_β·(Q_π − c)²`
    pub quadratic_term: f64,
    /// `(αu/2)·∫π_β·f²`
    pub penalty_term: f64,
    /// `(αu/2)·∫π_β·2f·(Q_π − c)`
    pub cross_term: f64,
    /// Sum of the three terms.
    pub expectation: f64,
    /// The expectation without the cross term.
    pub bound: f64,
}

/// Midpoint quadrature of `(αu/2)·∫π_β[(Q_π − c)² + f² + 2f(Q_π − c)]` and of
/// the same integrand without the cross term.
pub fn expected_variance(p: &GridProblem, q_pi: &[f64], f: &[f64], centering: Centering) -> Result<ExpectedVariance> {
    p.validate()?;
    let n = p.grid.n_bins();
    if q_pi.len() != n || f.len() != n {
        return Err(Error::Oracle("Q_π and f must have one value per cell".into()));
    }
    let c = match centering {
        Centering::Zero => 0.0,
        Centering::BehaviorMean => behavior_mean(p, q_pi)?,
        Centering::Custom(c) => c,
    };
    let half_au = 0.5 * p.alpha_u();
    let integral = |h: &dyn Fn(usize) -> f64| half_au * p.grid.integrate((0..n).map(|i| p.behavior[i] * h(i)));
    let quadratic_term = integral(&|i| (q_pi[i] - c).powi(2));
    let penalty_term = integral(&|i| f[i] * f[i]);
    let cross_term = integral(&|i| 2.0 * f[i] * (q_pi[i] - c));
    Ok(ExpectedVariance {
        c,
        quadratic_term,
        penalty_term,
        cross_term,
        expectation: quadratic_term + penalty_term + cross_term,
        bound: quadratic_term + penalty_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::grid::ActionGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn formula_examples() {
        let exact = variance_y(0.5, 0.05, 2.0, -1.0).unwrap();
        assert!((exact - 0.025 / (0.55 * 0.55) * 9.0).abs() < 1e-14);
        let weighted = mass_weighted_variance_y(0.5, 0.05, 2.0, -1.0).unwrap();
        assert!((weighted - 0.409_090_909_090_909).abs() < 1e-12);
        assert_eq!(variance_y(0.5, 0.05, 1.5, 1.5).unwrap(), 0.0);
        assert_eq!(variance_y(0.0, 0.05, 1.5, -3.0).unwrap(), 0.0);
        assert!(variance_y(0.5, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn monte_carlo_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mc = monte_carlo_variance_y(0.5, 0.05, 2.0, -1.0, 200_000, &mut rng).unwrap();
        let exact = variance_y(0.5, 0.05, 2.0, -1.0).unwrap();
        assert!((mc.variance - exact).abs() < 4.0 * mc.std_error, "{mc:?} vs {exact}");
    }

    fn normalized_problem() -> GridProblem {
        let grid = ActionGrid::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = GridProblem::random(&grid, &mut rng);
        p.alpha = 0.3;
        p
    }

    #[test]
    fn behavior_mean_minimizes_quadratic_term() {
        let p = normalized_problem();
        let q = p.backup.clone();
        let f = vec![0.0; q.len()];
        let best = expected_variance(&p, &q, &f, Centering::BehaviorMean).unwrap();
        for c in [-3.0, -0.1, 0.0, 0.2, 5.0] {
            let other = expected_variance(&p, &q, &f, Centering::Custom(best.c + c)).unwrap();
            assert!(best.quadratic_term <= other.quadratic_term);
        }
    }

    #[test]
    fn zero_penalty_reduces_to_behavior_variance() {
        let p = normalized_problem();
        let q = p.backup.clone();
        let f = vec![0.0; q.len()];
        let ev = expected_variance(&p, &q, &f, Centering::BehaviorMean).unwrap();
        // π_β integrates to one on the grid, so this is αu/2 times Var_π(Q)
        let mean = behavior_mean(&p, &q).unwrap();
        let var = p.grid.integrate(p.behavior.iter().zip(&q).map(|(pi, q)| pi * (q - mean).powi(2)));
        assert!((ev.expectation - 0.5 * p.alpha_u() * var).abs() < 1e-12 * (1.0 + var));
        assert_eq!(ev.expectation, ev.bound);
    }

    #[test]
    fn bound_exceeds_expectation_when_cross_term_negative() {
        let p = normalized_problem();
        let f = energy_penalty(&p, 2.0);
        // Q_π = −f makes the cross term non-positive for c = 0
        let q: Vec<f64> = f.iter().map(|v| -v).collect();
        let ev = expected_variance(&p, &q, &f, Centering::Zero).unwrap();
        assert!(ev.cross_term <= 0.0);
        assert!(ev.expectation <= ev.bound);
    }

    #[test]
    fn energy_penalty_is_a_bowl() {
        let p = normalized_problem();
        let f = energy_penalty(&p, 1.0);
        let (argmin, _) = f
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if *v < bv { (i, *v) } else { (bi, bv) });
        let mean = behavior_mean(&p, &p.grid.centers).unwrap();
        assert!((p.grid.centers[argmin] - mean).abs() <= p.grid.width);
        assert!(f.iter().all(|v| *v >= 0.0));
    }
}
