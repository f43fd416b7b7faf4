//! Cart-pole swing-up.
//!
//! A pole hinged on a cart that slides along a bounded track, actuated by a
//! horizontal force on the cart. The pole angle is measured from upright,
//! so episodes start hanging down at `phi = pi` and the agent must swing the
//! pole up and balance it while keeping the cart near the center. The step
//! reward `cos(phi) - 0.01 x^2 - 0.01 phi_d^2` pays for pole height and
//! mildly penalizes wandering from the middle of the track. The pole-speed
//! term plays the same role as the angular-velocity cost in the pendulum
//! task: without it, keeping the pole in continuous rotation averages
//! `cos(phi)` to zero and outscores everything short of genuine balance,
//! and that spin is crude enough for barely-learning agents to find.
//!
//! The track ends in rigid stops: a cart reaching `|x| = 2.4` stays there
//! with its velocity zeroed until the force pushes it back inward, and the
//! episode runs its full length. Ending the episode on track exit instead
//! breaks training at this scale twice over: an exploring policy reaches
//! the boundary within a few dozen steps, so episodes truncate before any
//! reward accumulates, and with a negative step reward the truncation
//! itself becomes attractive — cutting the cost stream short outscores
//! actually raising the pole, no matter what fixed penalty the exit
//! carries.
//!
//! The dynamics are the classic frictionless cart-pole equations with the
//! pole's mass distributed along its length (the 4/3 factor):
//!
//! ```text
//! temp   = (F + mp l phi_d^2 sin(phi)) / (mc + mp)
//! phi_dd = (g sin(phi) - cos(phi) temp)
//!          / (l (4/3 - mp cos^2(phi) / (mc + mp)))
//! x_dd   = temp - mp l phi_dd cos(phi) / (mc + mp)
//! ```

use std::f64::consts::PI;

use super::{clip_action, rk4, wrap_angle, EnvSpec, Environment, Step};
use crate::Result;

pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const GRAVITY: f64 = 9.81;
pub const FORCE_BOUND: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const EPISODE_STEPS: usize = 500;
pub const TRACK_LIMIT: f64 = 2.4;
pub const MAX_CART_SPEED: f64 = 10.0;
pub const MAX_POLE_SPEED: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    x: f64,
    x_dot: f64,
    /// Pole angle from upright, kept in `(-pi, pi]`.
    phi: f64,
    phi_dot: f64,
    steps: usize,
}

impl CartPole {
    pub fn new() -> Self {
        CartPole {
            spec: EnvSpec {
                observation_dim: 5,
                action_dim: 1,
                action_bounds: vec![FORCE_BOUND],
                episode_length: EPISODE_STEPS,
                dt: DT,
            },
            x: 0.0,
            x_dot: 0.0,
            phi: PI,
            phi_dot: 0.0,
            steps: 0,
        }
    }

    /// Current `(x, x_dot, phi, phi_dot)`.
    pub fn state(&self) -> (f64, f64, f64, f64) {
        (self.x, self.x_dot, self.phi, self.phi_dot)
    }

    /// Overrides the physical state without touching the step counter.
    pub fn set_state(&mut self, x: f64, x_dot: f64, phi: f64, phi_dot: f64) {
        self.x = x.clamp(-TRACK_LIMIT, TRACK_LIMIT);
        self.x_dot = x_dot.clamp(-MAX_CART_SPEED, MAX_CART_SPEED);
        self.phi = wrap_angle(phi);
        self.phi_dot = phi_dot.clamp(-MAX_POLE_SPEED, MAX_POLE_SPEED);
    }

    fn observation(&self) -> Vec<f64> {
        vec![
            self.x / TRACK_LIMIT,
            self.x_dot / MAX_CART_SPEED,
            self.phi.cos(),
            self.phi.sin(),
            self.phi_dot / MAX_POLE_SPEED,
        ]
    }
}

impl Default for CartPole {
    fn default() -> Self {
        CartPole::new()
    }
}

fn derivatives(s: &[f64; 4], force: f64) -> [f64; 4] {
    let [_, x_dot, phi, phi_dot] = *s;
    let total_mass = CART_MASS + POLE_MASS;
    let (sin_phi, cos_phi) = phi.sin_cos();
    let temp = (force + POLE_MASS * POLE_HALF_LENGTH * phi_dot * phi_dot * sin_phi) / total_mass;
    let phi_dd = (GRAVITY * sin_phi - cos_phi * temp)
        / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_phi * cos_phi / total_mass));
    let x_dd = temp - POLE_MASS * POLE_HALF_LENGTH * phi_dd * cos_phi / total_mass;
    [x_dot, x_dd, phi_dot, phi_dd]
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.x = 0.0;
        self.x_dot = 0.0;
        self.phi = PI;
        self.phi_dot = 0.0;
        self.steps = 0;
        Ok(self.observation())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let force = clip_action(&self.spec, action)?[0];
        let next = rk4(
            |s| derivatives(s, force),
            &[self.x, self.x_dot, self.phi, self.phi_dot],
            DT,
        );
        if !next.iter().all(|v| v.is_finite()) {
            return Err(crate::Error::env("cart-pole state diverged"));
        }
        self.x = next[0];
        self.x_dot = next[1].clamp(-MAX_CART_SPEED, MAX_CART_SPEED);
        if self.x.abs() > TRACK_LIMIT {
            self.x = TRACK_LIMIT.copysign(self.x);
            self.x_dot = 0.0;
        }
        self.phi = wrap_angle(next[2]);
        self.phi_dot = next[3].clamp(-MAX_POLE_SPEED, MAX_POLE_SPEED);
        self.steps += 1;

        let reward =
            self.phi.cos() - 0.01 * self.x * self.x - 0.01 * self.phi_dot * self.phi_dot;
        Ok(Step {
            obs: self.observation(),
            reward,
            terminal: false,
            timeout: self.steps >= self.spec.episode_length,
        })
    }
}
