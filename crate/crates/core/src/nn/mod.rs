//! Numerical substrate: dense networks, Adam, polyak blending, gradient checks.

mod checkpoint;
pub mod gradcheck;
mod mlp;
mod optim;

pub use gradcheck::{grad_check, CheckLoss};
pub use mlp::{concat_cols, Activation, ForwardCache, Gradients, Mat, Mlp};
pub use optim::{adam_step, polyak_update, AdamState};
