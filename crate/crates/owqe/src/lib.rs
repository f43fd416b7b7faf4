//! Online weighted Q-ensembles of DDPG agents for continuous control.
//!
//! An ensemble of independently parameterized DDPG agents acts through a
//! single policy: every actor proposes an action, every critic scores every
//! proposal, and the scores are combined into one ensemble preference. The
//! critic weights used in that combination are themselves trained online by
//! pushing them toward the critics with the lowest temporal-difference error,
//! so badly parameterized members lose influence without any manual tuning.
//!
//! The crate is organized along the data path:
//!
//! - [`nnet`]: dense networks, reverse-mode gradients, Adam.
//! - [`replay`]: the shared experience buffer.
//! - [`agent`]: a single DDPG member (actor, critic, targets, noise).
//! - [`ensemble`]: Q-matrix construction, aggregation strategies, weight
//!   learning, and the training loop.
//! - [`envs`]: built-in pendulum / cart-pole swing-up benchmarks and the
//!   line-delimited JSON protocol for external environments.
//! - [`metrics`]: final performance, confidence intervals, relative regret.
//! - [`harness`]: experiment configs, the run matrix, parameter search, and
//!   SVG plots.

pub mod agent;
pub mod ensemble;
pub mod envs;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nnet;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
