//! Continuous-control benchmark environments.
//!
//! Two built-in swing-up tasks (torque-limited pendulum, cart-pole) with
//! trigonometric observations, plus a line-delimited JSON protocol for
//! driving environments that live in another process.
//!
//! Episodes start at the stable rest point and run for a fixed number of
//! steps; a `timeout` at the step limit is reported separately from a
//! `terminal` state failure, because only the latter truncates bootstrapped
//! value targets.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod cartpole;
mod pendulum;
mod protocol;

pub use cartpole::CartPole;
pub use pendulum::Pendulum;
pub use protocol::{serve_env, ExternalEnv};

/// Static description of an environment, exchanged verbatim over the wire
/// protocol as the handshake line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_dim: usize,
    /// Symmetric action bound per dimension; actions are clipped to
    /// `[-bound, +bound]`.
    pub action_bounds: Vec<f64>,
    pub episode_length: usize,
    pub dt: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.observation_dim == 0 || self.action_dim == 0 {
            return Err(Error::config("environment dims must be positive"));
        }
        if self.action_bounds.len() != self.action_dim {
            return Err(Error::config("one action bound per action dimension"));
        }
        if !self.action_bounds.iter().all(|&b| b > 0.0 && b.is_finite()) {
            return Err(Error::config("action bounds must be strictly positive"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("episode length must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        Ok(())
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// State failure (a crash, a fall — the built-in benchmarks never set
    /// it, external environments may). Truncates value bootstraps.
    pub terminal: bool,
    /// Episode step limit reached; the state itself is not terminal.
    pub timeout: bool,
}

/// A single-threaded, exactly deterministic environment instance.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    /// Puts the environment back at its rest point and returns the initial
    /// observation.
    fn reset(&mut self) -> Result<Vec<f64>>;
    /// Advances the dynamics by one `dt` under the (internally clipped)
    /// action.
    fn step(&mut self, action: &[f64]) -> Result<Step>;
}

/// Builds an environment from its identifier: `pendulum`, `cartpole`, or
/// `external:<command line>` for a subprocess speaking the wire protocol.
pub fn make_env(id: &str) -> Result<Box<dyn Environment>> {
    match id {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "cartpole" => Ok(Box::new(CartPole::new())),
        _ => {
            if let Some(cmd) = id.strip_prefix("external:") {
                Ok(Box::new(ExternalEnv::spawn(cmd)?))
            } else {
                Err(Error::config(format!(
                    "unknown environment '{id}' (expected pendulum, cartpole, or external:<cmd>)"
                )))
            }
        }
    }
}

/// Wraps an angle into `(-pi, pi]`. In-range angles pass through bit-exact.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    if -PI < x && x <= PI {
        return x;
    }
    PI - (PI - x).rem_euclid(2.0 * PI)
}

/// One classic fourth-order Runge-Kutta step of the autonomous system
/// `y' = f(y)` (actions enter `f` by capture, held constant over the step).
pub fn rk4<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], y: &[f64; N], dt: f64) -> [f64; N] {
    let add = |y: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *y;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, dt / 2.0));
    let k3 = f(&add(y, &k2, dt / 2.0));
    let k4 = f(&add(y, &k3, dt));
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Shared step plumbing: validates the action vector and clips it to the
/// declared bounds.
fn clip_action(spec: &EnvSpec, action: &[f64]) -> Result<Vec<f64>> {
    if action.len() != spec.action_dim {
        return Err(Error::env(format!(
            "action has {} dims, environment expects {}",
            action.len(),
            spec.action_dim
        )));
    }
    if !action.iter().all(|a| a.is_finite()) {
        return Err(Error::env("non-finite action"));
    }
    Ok(action
        .iter()
        .zip(&spec.action_bounds)
        .map(|(&a, &b)| a.clamp(-b, b))
        .collect())
}
