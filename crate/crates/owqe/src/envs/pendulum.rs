//! Torque-limited pendulum swing-up.
//!
//! A point mass on a rigid rod, actuated by a bounded torque at the pivot.
//! The angle is measured from the upright position, so the episode starts
//! hanging down at `theta = pi`. The torque bound is far below the holding
//! torque at the horizontal, so reaching upright requires pumping energy
//! over several swings.
//!
//! Dynamics: `theta_dd = (g/l) sin(theta) + (u - b*theta_d) / (m l^2)`,
//! integrated with RK4 at a fixed step.

use std::f64::consts::PI;

use super::{clip_action, rk4, wrap_angle, EnvSpec, Environment, Step};
use crate::Result;

pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const GRAVITY: f64 = 9.81;
pub const DAMPING: f64 = 0.05;
pub const TORQUE_BOUND: f64 = 2.0;
pub const DT: f64 = 0.05;
pub const EPISODE_STEPS: usize = 200;
pub const MAX_SPEED: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    /// Angle from upright, kept in `(-pi, pi]`.
    theta: f64,
    theta_dot: f64,
    steps: usize,
    damping: f64,
}

impl Pendulum {
    pub fn new() -> Self {
        Pendulum::with_damping(DAMPING)
    }

    /// Frictionless variant; with zero torque its trajectories conserve
    /// mechanical energy, which pins down the integrator.
    pub fn undamped() -> Self {
        Pendulum::with_damping(0.0)
    }

    pub fn with_damping(damping: f64) -> Self {
        Pendulum {
            spec: EnvSpec {
                observation_dim: 3,
                action_dim: 1,
                action_bounds: vec![TORQUE_BOUND],
                episode_length: EPISODE_STEPS,
                dt: DT,
            },
            theta: PI,
            theta_dot: 0.0,
            steps: 0,
            damping,
        }
    }

    /// Current `(theta, theta_dot)`.
    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    /// Overrides the physical state without touching the step counter.
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = wrap_angle(theta);
        self.theta_dot = theta_dot.clamp(-MAX_SPEED, MAX_SPEED);
    }

    /// Kinetic plus potential energy, with the pivot as potential reference
    /// (the bob sits `l cos(theta)` above the pivot).
    pub fn mechanical_energy(&self) -> f64 {
        0.5 * MASS * LENGTH * LENGTH * self.theta_dot * self.theta_dot
            + MASS * GRAVITY * LENGTH * self.theta.cos()
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot / MAX_SPEED]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum::new()
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.theta = PI;
        self.theta_dot = 0.0;
        self.steps = 0;
        Ok(self.observation())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let u = clip_action(&self.spec, action)?[0];
        let b = self.damping;
        let deriv = |s: &[f64; 2]| {
            [
                s[1],
                (GRAVITY / LENGTH) * s[0].sin() + (u - b * s[1]) / (MASS * LENGTH * LENGTH),
            ]
        };
        let next = rk4(deriv, &[self.theta, self.theta_dot], DT);
        if !next.iter().all(|x| x.is_finite()) {
            return Err(crate::Error::env("pendulum state diverged"));
        }
        self.theta = wrap_angle(next[0]);
        self.theta_dot = next[1].clamp(-MAX_SPEED, MAX_SPEED);
        self.steps += 1;

        let reward = -(self.theta * self.theta
            + 0.1 * self.theta_dot * self.theta_dot
            + 0.001 * u * u);
        Ok(Step {
            obs: self.observation(),
            reward,
            terminal: false,
            timeout: self.steps >= self.spec.episode_length,
        })
    }
}
