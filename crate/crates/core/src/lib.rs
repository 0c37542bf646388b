//! Offline reinforcement learning with adaptive behavior regularization.
//!
//! The crate bundles everything needed to train and check the method at desk
//! scale: a small dense-network library with manual backprop ([`nn`]), a
//! continuous bandit and a point-mass task ([`envs`]), offline datasets
//! ([`data`]), the regularized actor-critic ([`abr`]), comparison agents
//! ([`baselines`]) and an exact tabular oracle for the regularized backup
//! ([`oracle`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abr;
pub mod baselines;
pub mod data;
pub mod envs;
pub mod error;
pub mod nn;
pub mod oracle;

pub use error::{Error, Result};
