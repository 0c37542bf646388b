//! Tabular form of the regularized backup on a 1-D action grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly spaced cell centers over `[low, high]` (midpoint rule).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub low: f64,
    pub high: f64,
    pub centers: Vec<f64>,
    pub width: f64,
    /// Uniform density over the box, `1/(high − low)`.
    pub u: f64,
}

impl ActionGrid {
    pub const DEFAULT_BINS: usize = 401;

    pub fn new(n_bins: usize, low: f64, high: f64) -> Result<Self> {
        if n_bins == 0 || !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(Error::Config(format!("bad grid: {n_bins} bins over [{low}, {high}]")));
        }
        let width = (high - low) / n_bins as f64;
        let centers = (0..n_bins).map(|i| low + (i as f64 + 0.5) * width).collect();
        Ok(Self {
            low,
            high,
            centers,
            width,
            u: 1.0 / (high - low),
        })
    }

    /// 401 cells over `[−1, 1]`.
    pub fn standard() -> Self {
        Self::new(Self::DEFAULT_BINS, -1.0, 1.0).expect("static grid")
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    /// Midpoint-rule integral of per-cell values.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        values.into_iter().sum::<f64>() * self.width
    }
}

/// Per-cell inputs of one backup step plus the scalars of the bias bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridProblem {
    pub grid: ActionGrid,
    /// π_β per cell.
    pub behavior: Vec<f64>,
    /// Bellman backup `BQ` per cell.
    pub backup: Vec<f64>,
    /// Surrogate `Q̃` per cell.
    pub surrogate: Vec<f64>,
    pub alpha: f64,
    pub r_max: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl GridProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_bins();
        if self.behavior.len() != n || self.backup.len() != n || self.surrogate.len() != n {
            return Err(Error::Oracle("per-cell arrays must match the grid".into()));
        }
        if self.behavior.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Oracle("behavior densities must be finite and non-negative".into()));
        }
        if self.backup.iter().chain(&self.surrogate).any(|v| !v.is_finite()) {
            return Err(Error::Oracle("backup and surrogate must be finite".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Oracle("alpha must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(self.r_max >= 0.0) || !(self.sigma > 0.0) || !(self.delta >= 0.0) {
            return Err(Error::Oracle("need γ ∈ [0,1), R_max ≥ 0, σ > 0, δ ≥ 0".into()));
        }
        Ok(())
    }

    pub fn alpha_u(&self) -> f64 {
        self.alpha * self.grid.u
    }

    /// `R_max/(1−γ)`.
    pub fn value_bound(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    /// A random problem meeting the bias-bound preconditions: π_β is a
    /// normalized mixture of one to three bumps with a few zeroed cells,
    /// `|BQ| ≤ R_max/(1−γ)` and `|Q̃| ≤ δ`.
    pub fn random<R: Rng + ?Sized>(grid: &ActionGrid, rng: &mut R) -> Self {
        let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
            .map(|_| {
                (
                    rng.random_range(0.1..1.0),
                    rng.random_range(grid.low..grid.high),
                    rng.random_range(0.02..0.5) * (grid.high - grid.low),
                )
            })
            .collect();
        let mut behavior: Vec<f64> = grid
            .centers
            .iter()
            .map(|a| {
                bumps
                    .iter()
                    .map(|(w, m, s)| w * (-0.5 * ((a - m) / s).powi(2)).exp())
                    .sum()
            })
            .collect();
        for _ in 0..rng.random_range(0..grid.n_bins() / 4) {
            let i = rng.random_range(0..grid.n_bins());
            behavior[i] = 0.0;
        }
        let mass = grid.integrate(behavior.iter().copied());
        behavior.iter_mut().for_each(|p| *p /= mass);
        let peak = behavior.iter().cloned().fold(0.0, f64::max);

        let r_max = rng.random_range(0.1..10.0);
        let gamma = rng.random_range(0.0..0.99);
        let delta = rng.random_range(0.1..20.0);
        let vmax = r_max / (1.0 - gamma);
        let backup = (0..grid.n_bins()).map(|_| rng.random_range(-vmax..=vmax)).collect();
        let surrogate = (0..grid.n_bins()).map(|_| rng.random_range(-delta..=delta)).collect();
        Self {
            grid: grid.clone(),
            behavior,
            backup,
            surrogate,
            alpha: rng.random_range(0.0..2.0),
            r_max,
            gamma,
            sigma: rng.random_range(0.01..1.0) * peak,
            delta,
        }
    }
}

/// `w = αu/(π_β + αu)`; zero when both vanish (nothing pulls either way, so
/// the backup is kept).
pub fn adaptive_weight(behavior: f64, alpha_u: f64) -> f64 {
    let denom = behavior + alpha_u;
    if denom == 0.0 {
        0.0
    } else {
        alpha_u / denom
    }
}

/// `Q̂ = (1 − w)·BQ + w·Q̃` per cell.
pub fn closed_form_backup(p: &GridProblem) -> Vec<f64> {
    let au = p.alpha_u();
    p.behavior
        .iter()
        .zip(p.backup.iter().zip(&p.surrogate))
        .map(|(&pi, (&bq, &qt))| {
            let w = adaptive_weight(pi, au);
            (1.0 - w) * bq + w * qt
        })
        .collect()
}

/// Bisection tolerance on the minimizer's bracket width.
pub const MINIMIZER_TOL: f64 = 1e-10;

/// Per-cell argmin of `π_β·(Q − BQ)² + αu·(Q − Q̃)²` found by bisecting the
/// derivative over the bracket `[min(BQ, Q̃), max(BQ, Q̃)]`.
pub fn objective_minimizer(p: &GridProblem) -> Result<Vec<f64>> {
    let au = p.alpha_u();
    p.behavior
        .iter()
        .zip(p.backup.iter().zip(&p.surrogate))
        .map(|(&pi, (&bq, &qt))| minimize_cell(pi, au, bq, qt))
        .collect()
}

fn minimize_cell(pi: f64, au: f64, bq: f64, qt: f64) -> Result<f64> {
    if pi == 0.0 && au == 0.0 {
        return Ok(bq);
    }
    let slope = |q: f64| 2.0 * pi * (q - bq) + 2.0 * au * (q - qt);
    let (mut lo, mut hi) = if bq <= qt { (bq, qt) } else { (qt, bq) };
    // a one-sided objective is stationary at an end of the bracket
    if slope(lo) >= 0.0 {
        return Ok(lo);
    }
    if slope(hi) <= 0.0 {
        return Ok(hi);
    }
    for _ in 0..400 {
        if hi - lo <= MINIMIZER_TOL {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let g = slope(mid);
        if g == 0.0 {
            return Ok(mid);
        } else if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Oracle(format!("bisection did not converge for π={pi}, αu={au}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    /// `max |Q̂ − BQ|` over cells with `π_β > σ`.
    pub max_bias: f64,
    /// `(αu/σ)·(R_max/(1−γ) + δ)`.
    pub bound: f64,
    pub holds: bool,
    pub cells_checked: usize,
}

/// Compares the realized bias on well-supported cells with the analytic bound.
pub fn bias_bound_check(p: &GridProblem) -> Result<BiasCheck> {
    p.validate()?;
    let vmax = p.value_bound();
    if let Some(i) = p.backup.iter().position(|v| v.abs() > vmax) {
        return Err(Error::Oracle(format!("|BQ| = {} exceeds R_max/(1−γ) = {vmax} at cell {i}", p.backup[i].abs())));
    }
    if let Some(i) = p.surrogate.iter().position(|v| v.abs() > p.delta) {
        return Err(Error::Oracle(format!("|Q̃| = {} exceeds δ = {} at cell {i}", p.surrogate[i].abs(), p.delta)));
    }
    let q_hat = closed_form_backup(p);
    let mut max_bias = 0.0f64;
    let mut cells_checked = 0;
    for ((q, bq), &pi) in q_hat.iter().zip(&p.backup).zip(&p.behavior) {
        if pi > p.sigma {
            max_bias = max_bias.max((q - bq).abs());
            cells_checked += 1;
        }
    }
    let bound = p.alpha_u() / p.sigma * (vmax + p.delta);
    Ok(BiasCheck {
        max_bias,
        bound,
        holds: max_bias < bound || max_bias == 0.0,
        cells_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(pi: f64, alpha: f64, u_span: f64, bq: f64, qt: f64) -> GridProblem {
        let grid = ActionGrid::new(1, 0.0, u_span).unwrap();
        GridProblem {
            grid,
            behavior: vec![pi],
            backup: vec![bq],
            surrogate: vec![qt],
            alpha,
            r_max: 1.0,
            gamma: 0.9,
            sigma: 0.25,
            delta: 12.0,
        }
    }

    #[test]
    fn standard_grid() {
        let g = ActionGrid::standard();
        assert_eq!(g.n_bins(), 401);
        assert_eq!(g.centers[200], 0.0);
        assert!((g.u * (g.high - g.low) - 1.0).abs() < 1e-15);
        assert!((g.integrate(std::iter::repeat_n(g.u, 401)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_example() {
        // u = 0.5 from a box of width 2
        let p = single(0.5, 0.1, 2.0, 2.0, -1.0);
        let q = closed_form_backup(&p)[0];
        let w = 0.05 / 0.55;
        assert!((q - (2.0 - 3.0 * w)).abs() < 1e-15);
        assert!((q - 1.727_272_727_272_727).abs() < 1e-12);
    }

    #[test]
    fn piecewise_limits_exact() {
        assert_eq!(closed_form_backup(&single(0.0, 0.3, 2.0, 2.0, -1.3))[0], -1.3);
        assert_eq!(closed_form_backup(&single(0.7, 0.0, 2.0, 2.0, -1.3))[0], 2.0);
        assert_eq!(closed_form_backup(&single(0.0, 0.0, 2.0, 2.0, -1.3))[0], 2.0);
    }

    #[test]
    fn minimizer_special_cases() {
        // π_β = αu gives the midpoint
        let q = objective_minimizer(&single(0.05, 0.1, 2.0, 3.0, -1.0)).unwrap()[0];
        assert!((q - 1.0).abs() < 1e-9);
        let q = objective_minimizer(&single(0.4, 0.7, 2.0, 1.5, 1.5)).unwrap()[0];
        assert_eq!(q, 1.5);
        let q = objective_minimizer(&single(0.0, 0.3, 2.0, 1.7, -0.3)).unwrap()[0];
        assert_eq!(q, -0.3);
        let q = objective_minimizer(&single(0.4, 0.0, 2.0, 1.7, -0.3)).unwrap()[0];
        assert_eq!(q, 1.7);
    }

    #[test]
    fn bound_example() {
        let p = single(0.5, 0.1, 2.0, 2.0, -1.0);
        let check = bias_bound_check(&p).unwrap();
        assert!((check.bound - 4.4).abs() < 1e-12);
        assert!(check.holds);
        let zero = bias_bound_check(&single(0.5, 0.0, 2.0, 2.0, -1.0)).unwrap();
        assert_eq!((zero.max_bias, zero.bound, zero.holds), (0.0, 0.0, true));
    }

    #[test]
    fn precondition_violations_reported() {
        let mut p = single(0.5, 0.1, 2.0, 20.0, -1.0);
        assert!(bias_bound_check(&p).is_err());
        p.backup[0] = 1.0;
        p.surrogate[0] = 13.0;
        assert!(bias_bound_check(&p).is_err());
    }

    #[test]
    fn random_problems_meet_preconditions() {
        let grid = ActionGrid::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let p = GridProblem::random(&grid, &mut rng);
            p.validate().unwrap();
            assert!((grid.integrate(p.behavior.iter().copied()) - 1.0).abs() < 1e-9);
            bias_bound_check(&p).unwrap();
        }
    }

    proptest! {
        #[test]
        fn weight_monotone(pi in 0.0f64..10.0, dpi in 1e-6f64..10.0, au in 1e-6f64..10.0, dau in 1e-6f64..10.0) {
            prop_assert!(adaptive_weight(pi + dpi, au) < adaptive_weight(pi, au));
            prop_assert!(adaptive_weight(pi, au + dau) > adaptive_weight(pi, au));
            prop_assert!(adaptive_weight(0.0, au) == 1.0);
        }

        #[test]
        fn weight_vanishes_with_large_density(au in 1e-3f64..1.0) {
            prop_assert!(adaptive_weight(1e12, au) < 1e-9);
        }

        #[test]
        fn minimizer_matches_closed_form(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = ActionGrid::new(41, -1.0, 1.0).unwrap();
            let p = GridProblem::random(&grid, &mut rng);
            let a = closed_form_backup(&p);
            let b = objective_minimizer(&p).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
            }
        }

        #[test]
        fn halving_alpha_never_increases_bias(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = ActionGrid::new(41, -1.0, 1.0).unwrap();
            let mut p = GridProblem::random(&grid, &mut rng);
            let full = bias_bound_check(&p).unwrap();
            prop_assert!(full.holds);
            p.alpha *= 0.5;
            let half = bias_bound_check(&p).unwrap();
            prop_assert!(half.max_bias <= full.max_bias);
            // bias/α stays below the α-free part of the bound
            if p.alpha > 0.0 {
                prop_assert!(half.max_bias / p.alpha <= half.bound / p.alpha);
            }
        }
    }
}
