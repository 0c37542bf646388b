//! The adaptively regularized actor-critic on a TD3 backbone.
//!
//! Twin critics regress onto clipped double-Q targets and, for actions drawn
//! uniformly from the action box, onto `y − λ‖a − a'‖²`. Off the data
//! support this pulls Q down in proportion to the distance from the
//! dataset action; on it the TD term dominates. The actor simply ascends Q1.

mod agent;
mod config;
mod eval;
mod losses;
mod train;

pub use agent::{ActorPolicy, Agent};
pub use config::{AbrConfig, Td3Params};
pub use eval::{evaluate_policy, normalized_score};
pub use losses::{
    abr_critic_loss, actor_loss, lambda_coeff, regularized_critic_objective, td_regression,
    td_target, CriticObjective, CriticStep, TargetParams, TdRegression, UniformActions,
    LAMBDA_Q_FLOOR,
};
pub(crate) use losses::{actor_forward, probe_actor};
pub use train::{
    fit, read_metrics_csv, train, train_with_eval, write_metrics_csv, EvalHook, Method,
    TrainMetrics, TrainRun, DIVERGENCE_LIMIT,
};
