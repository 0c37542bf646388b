//! Learning-free checks of the regularized backup on a discretized action
//! axis, plus the learned-landscape experiment on the bandit.
//!
//! Per (s, a), minimizing `π_β·(Q − BQ)² + αu·(Q − Q̃)²` gives
//! `Q̂ = (1 − w)·BQ + w·Q̃` with `w = αu/(π_β + αu)`: the Bellman backup
//! where data is dense, the surrogate where it is absent.

mod grid;
mod landscape;
mod report;
mod variance;

pub use grid::{
    adaptive_weight, bias_bound_check, closed_form_backup, objective_minimizer, ActionGrid,
    BiasCheck, GridProblem, MINIMIZER_TOL,
};
pub use landscape::{
    gradient_decomposition, landscape, write_landscape_csv, GradientDecomposition,
    LandscapeConfig, LandscapeCurve, LandscapeMethod, LandscapePoint,
};
pub use report::{oracle_suite, CheckOutcome, OracleReport, SuiteOptions};
pub use variance::{
    behavior_mean, energy_penalty, expected_variance, mass_weighted_variance_y,
    monte_carlo_variance_y, variance_y, Centering, ExpectedVariance, MonteCarloVariance,
};
