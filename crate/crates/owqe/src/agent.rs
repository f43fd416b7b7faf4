//! One DDPG ensemble member.
//!
//! An agent bundles an actor, a critic, their target networks, Adam state
//! for both, and the hyperparameters that vary across ensemble members.
//! Actors end in tanh scaled to the environment's action bounds; critics
//! take the concatenation `[state ‖ action]` and end linear. Both use two
//! hidden layers of `layer_size` neurons under the configured activation.
//!
//! Training follows the classic recipe: critics regress on bootstrapped
//! targets from the target networks, actors ascend the critic's value of
//! their own actions, and targets trail the mains through periodic Polyak
//! blending.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nnet::{polyak, Activation, AdamState, Gradients, Mlp, Trace};
use crate::replay::{ReplayBuffer, Transition};
use crate::{Error, Result};

/// Hyperparameters of one ensemble member. The first three are fixed across
/// the supported search space; the rest span it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Discount factor gamma.
    #[serde(default = "defaults::discount")]
    pub discount: f64,
    /// Scale applied to rewards inside training targets only; logged
    /// performance always uses raw rewards.
    #[serde(default = "defaults::reward_scale")]
    pub reward_scale: f64,
    /// Polyak averaging coefficient tau.
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    /// Period, in training timesteps, of the soft target update.
    pub target_update_interval: usize,
    /// Adam learning rate shared by actor and critic.
    pub learning_rate: f64,
    /// Total training samples consumed per environment step.
    pub replay_steps: usize,
    pub minibatch_size: usize,
    /// Width of both hidden layers.
    pub layer_size: usize,
    /// Hidden activation (output activations are fixed by role).
    pub activation: Activation,
}

mod defaults {
    pub fn discount() -> f64 {
        0.99
    }
    pub fn reward_scale() -> f64 {
        0.01
    }
    pub fn tau() -> f64 {
        0.01
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            discount: defaults::discount(),
            reward_scale: defaults::reward_scale(),
            tau: defaults::tau(),
            target_update_interval: 100,
            learning_rate: 0.001,
            replay_steps: 64,
            minibatch_size: 64,
            layer_size: 100,
            activation: Activation::Relu,
        }
    }
}

impl HyperParams {
    /// Validates every field against the supported search domains. Config
    /// files must pass; tests may construct values outside the domains
    /// directly.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return fail(format!("discount {} outside (0,1)", self.discount));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau {} outside (0,1]", self.tau));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return fail(format!("reward scale {} must be positive", self.reward_scale));
        }
        if ![10, 100].contains(&self.target_update_interval) {
            return fail(format!(
                "target update interval {} not in {{10, 100}}",
                self.target_update_interval
            ));
        }
        if self.learning_rate != 0.001 && self.learning_rate != 0.0001 {
            return fail(format!(
                "learning rate {} not in {{0.001, 0.0001}}",
                self.learning_rate
            ));
        }
        if ![64, 128, 256].contains(&self.replay_steps) {
            return fail(format!("replay steps {} not in {{64, 128, 256}}", self.replay_steps));
        }
        if ![16, 64, 128].contains(&self.minibatch_size) {
            return fail(format!(
                "minibatch size {} not in {{16, 64, 128}}",
                self.minibatch_size
            ));
        }
        if self.replay_steps % self.minibatch_size != 0 {
            return fail(format!(
                "replay steps {} not a multiple of minibatch size {}",
                self.replay_steps, self.minibatch_size
            ));
        }
        if ![50, 100, 200, 300, 400].contains(&self.layer_size) {
            return fail(format!(
                "layer size {} not in {{50, 100, 200, 300, 400}}",
                self.layer_size
            ));
        }
        if !matches!(self.activation, Activation::Relu | Activation::Softmax) {
            return fail("hidden activation must be relu or softmax".into());
        }
        Ok(())
    }

    /// Minibatch updates per environment step.
    pub fn updates_per_step(&self) -> usize {
        self.replay_steps / self.minibatch_size
    }
}

/// Ornstein-Uhlenbeck exploration noise: zero-reverting, time-correlated.
/// `x <- x + theta (0 - x) + sigma eta`, `eta ~ N(0, I)`, one unit step per
/// environment step.
#[derive(Debug, Clone)]
pub struct OuNoise {
    state: Vec<f64>,
    theta: f64,
    sigma: f64,
}

impl OuNoise {
    pub fn new(dim: usize) -> Self {
        OuNoise::with_params(dim, 0.15, 1.0)
    }

    pub fn with_params(dim: usize, theta: f64, sigma: f64) -> Self {
        OuNoise {
            state: vec![0.0; dim],
            theta,
            sigma,
        }
    }

    /// Zeroes the process; called at every episode start.
    pub fn reset(&mut self) {
        self.state.fill(0.0);
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) {
        self.state.copy_from_slice(state);
    }

    /// Advances one step and returns the new noise vector.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for x in &mut self.state {
            let eta: f64 = rng.sample(StandardNormal);
            *x += self.theta * (0.0 - *x) + self.sigma * eta;
        }
        &self.state
    }
}

/// One DDPG agent: four networks, two optimizers, a step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdpgAgent {
    hyper: HyperParams,
    action_bounds: Vec<f64>,
    actor: Mlp,
    critic: Mlp,
    target_actor: Mlp,
    target_critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    /// Training timesteps seen (one per `train_step` call with enough data).
    step_counter: u64,
}

impl DdpgAgent {
    /// Builds a fresh agent for an environment with `obs_dim` observations
    /// and the given symmetric action bounds. Targets start as exact copies
    /// of the mains.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_bounds: &[f64],
        hyper: HyperParams,
        rng: &mut R,
    ) -> Result<Self> {
        if obs_dim == 0 || action_bounds.is_empty() {
            return Err(Error::config("agent needs positive obs/action dims"));
        }
        if !action_bounds.iter().all(|&b| b > 0.0 && b.is_finite()) {
            return Err(Error::config("action bounds must be strictly positive"));
        }
        let action_dim = action_bounds.len();
        let l = hyper.layer_size;
        let h = hyper.activation;
        let actor = Mlp::new(&[obs_dim, l, l, action_dim], &[h, h, Activation::Tanh], rng)?;
        let critic = Mlp::new(
            &[obs_dim + action_dim, l, l, 1],
            &[h, h, Activation::Linear],
            rng,
        )?;
        let target_actor = actor.clone();
        let target_critic = critic.clone();
        let actor_opt = AdamState::new(actor.param_count());
        let critic_opt = AdamState::new(critic.param_count());
        Ok(DdpgAgent {
            hyper,
            action_bounds: action_bounds.to_vec(),
            actor,
            critic,
            target_actor,
            target_critic,
            actor_opt,
            critic_opt,
            step_counter: 0,
        })
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn action_bounds(&self) -> &[f64] {
        &self.action_bounds
    }

    pub fn observation_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_bounds.len()
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    /// Direct access for diagnostics and hand-built test networks.
    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    /// Replaces the critic (and its target and optimizer) with a hand-built
    /// network of compatible input width.
    pub fn install_critic(&mut self, critic: Mlp) -> Result<()> {
        if critic.input_dim() != self.observation_dim() + self.action_dim() || critic.output_dim() != 1
        {
            return Err(Error::config("replacement critic has incompatible dims"));
        }
        self.critic_opt = AdamState::new(critic.param_count());
        self.target_critic = critic.clone();
        self.critic = critic;
        Ok(())
    }

    /// Replaces the actor (and its target and optimizer) with a hand-built
    /// network of compatible dimensions.
    pub fn install_actor(&mut self, actor: Mlp) -> Result<()> {
        if actor.input_dim() != self.observation_dim() || actor.output_dim() != self.action_dim() {
            return Err(Error::config("replacement actor has incompatible dims"));
        }
        self.actor_opt = AdamState::new(actor.param_count());
        self.target_actor = actor.clone();
        self.actor = actor;
        Ok(())
    }

    /// Deterministic policy: actor forward pass scaled to the bounds.
    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.actor.forward(s)?;
        for (a, &b) in y.iter_mut().zip(&self.action_bounds) {
            *a *= b;
        }
        Ok(y)
    }

    /// Critic value of a state-action pair.
    pub fn critic_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&concat(s, a))?[0])
    }

    /// Bootstrapped training target for one transition, from the target
    /// networks: `y = r*scale + gamma * (1 - terminal) * Q'(s', mu'(s'))`.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        let mut bootstrap = 0.0;
        if !t.terminal {
            let mut a = self.target_actor.forward(&t.next_state)?;
            for (ai, &b) in a.iter_mut().zip(&self.action_bounds) {
                *ai *= b;
            }
            bootstrap = self.hyper.discount * self.target_critic.forward(&concat(&t.next_state, &a))?[0];
        }
        Ok(t.reward * self.hyper.reward_scale + bootstrap)
    }

    /// TD error of one transition under this agent's targets and scales.
    pub fn td_error(&self, t: &Transition) -> Result<f64> {
        Ok(self.td_target(t)? - self.critic_value(&t.state, &t.action)?)
    }

    /// One critic Adam step on the mean squared TD residual of `batch`;
    /// returns the pre-step loss. A non-finite loss or gradient leaves the
    /// agent untouched.
    pub fn critic_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::config("empty critic batch"));
        }
        let inv_b = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut trace = Trace::default();
        let mut loss = 0.0;
        for t in batch {
            let y = self.td_target(t)?;
            self.critic.forward_traced(&concat(&t.state, &t.action), &mut trace)?;
            let residual = trace.output()[0] - y;
            loss += residual * residual * inv_b;
            // d/dQ of mean (Q - y)^2
            let upstream = [2.0 * residual * inv_b];
            self.critic.backward_traced(&trace, &upstream, &mut grads, None)?;
        }
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::numeric("non-finite critic loss; update skipped"));
        }
        self.critic.adam_step(&grads, &mut self.critic_opt, self.hyper.learning_rate)?;
        Ok(loss)
    }

    /// One actor Adam step ascending `mean_s Q(s, mu(s))` with the critic
    /// frozen. Gradients flow through the critic's action inputs only.
    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::config("empty actor batch"));
        }
        let inv_b = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut actor_trace = Trace::default();
        let mut critic_trace = Trace::default();
        let mut dq_dsa = Vec::new();
        let obs_dim = self.observation_dim();
        for t in batch {
            self.actor.forward_traced(&t.state, &mut actor_trace)?;
            let mut action = actor_trace.output().to_vec();
            for (a, &b) in action.iter_mut().zip(&self.action_bounds) {
                *a *= b;
            }
            self.critic
                .forward_traced(&concat(&t.state, &action), &mut critic_trace)?;
            self.critic
                .input_gradient_traced(&critic_trace, &[1.0], &mut dq_dsa)?;
            // Ascent on Q = descent on -Q; chain through action scaling.
            let upstream: Vec<f64> = dq_dsa[obs_dim..]
                .iter()
                .zip(&self.action_bounds)
                .map(|(&g, &b)| -g * b * inv_b)
                .collect();
            self.actor
                .backward_traced(&actor_trace, &upstream, &mut grads, None)?;
        }
        if !grads.is_finite() {
            return Err(Error::numeric("non-finite actor gradient; update skipped"));
        }
        self.actor.adam_step(&grads, &mut self.actor_opt, self.hyper.learning_rate)
    }

    /// Blends targets toward mains: `p' <- (1 - tau) p' + tau p`.
    pub fn soft_target_update(&mut self) {
        polyak(&mut self.target_actor, &self.actor, self.hyper.tau);
        polyak(&mut self.target_critic, &self.critic, self.hyper.tau);
    }

    /// One training timestep: `replay_steps / minibatch_size` critic+actor
    /// updates on fresh uniform minibatches, plus the periodic soft target
    /// update. A buffer smaller than one minibatch makes this a no-op.
    /// Returns the number of minibatch updates skipped for numeric reasons.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<u32> {
        if buffer.len() < self.hyper.minibatch_size {
            return Ok(0);
        }
        let mut skipped = 0;
        for _ in 0..self.hyper.updates_per_step() {
            let batch = buffer.sample(self.hyper.minibatch_size, rng)?;
            match self.critic_update(&batch) {
                Ok(_) => {}
                Err(Error::Numeric(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
            match self.actor_update(&batch) {
                Ok(()) => {}
                Err(Error::Numeric(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        self.step_counter += 1;
        if self.step_counter % self.hyper.target_update_interval as u64 == 0 {
            self.soft_target_update();
        }
        Ok(skipped)
    }

    /// Serializes the whole agent (networks, optimizer state, counter).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let agent: DdpgAgent = serde_json::from_str(json)?;
        if agent.action_bounds.len() != agent.actor.output_dim() {
            return Err(Error::config("checkpoint bounds do not match actor"));
        }
        Ok(agent)
    }
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.len() + a.len());
    v.extend_from_slice(s);
    v.extend_from_slice(a);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Layer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tiny_hyper() -> HyperParams {
        HyperParams {
            layer_size: 16,
            minibatch_size: 16,
            replay_steps: 16,
            ..HyperParams::default()
        }
    }

    fn transition(s: Vec<f64>, a: Vec<f64>, r: f64) -> Transition {
        Transition {
            state: s.clone(),
            action: a,
            reward: r,
            next_state: s,
            terminal: false,
        }
    }

    #[test]
    fn validate_accepts_all_table_combinations() {
        for &interval in &[10, 100] {
            for &lr in &[0.001, 0.0001] {
                for &replay in &[64, 128, 256] {
                    for &mb in &[16, 64, 128] {
                        if replay % mb != 0 {
                            continue;
                        }
                        for &layer in &[50, 100, 200, 300, 400] {
                            for &act in &[Activation::Relu, Activation::Softmax] {
                                let hp = HyperParams {
                                    target_update_interval: interval,
                                    learning_rate: lr,
                                    replay_steps: replay,
                                    minibatch_size: mb,
                                    layer_size: layer,
                                    activation: act,
                                    ..HyperParams::default()
                                };
                                hp.validate().unwrap();
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn validate_rejects_out_of_domain_values() {
        let base = HyperParams::default();
        let cases = [
            HyperParams { discount: 1.0, ..base.clone() },
            HyperParams { tau: 0.0, ..base.clone() },
            HyperParams { target_update_interval: 50, ..base.clone() },
            HyperParams { learning_rate: 0.01, ..base.clone() },
            HyperParams { replay_steps: 100, ..base.clone() },
            HyperParams { minibatch_size: 32, ..base.clone() },
            HyperParams { layer_size: 64, ..base.clone() },
            HyperParams { activation: Activation::Tanh, ..base.clone() },
            // 128 % ... fine, but 64 steps with 128 batch is not a multiple.
            HyperParams { replay_steps: 64, minibatch_size: 128, ..base.clone() },
        ];
        for hp in cases {
            assert!(hp.validate().is_err(), "{hp:?} should fail validation");
        }
        base.validate().unwrap();
    }

    #[test]
    fn actions_respect_bounds_everywhere() {
        let agent = DdpgAgent::new(3, &[2.0], tiny_hyper(), &mut rng(0)).unwrap();
        let mut r = rng(1);
        for _ in 0..200 {
            let s: Vec<f64> = (0..3).map(|_| r.random_range(-5.0..5.0)).collect();
            let a = agent.act(&s).unwrap();
            assert_eq!(a.len(), 1);
            assert!(a[0].abs() <= 2.0);
        }
    }

    #[test]
    fn zero_weight_actor_outputs_scaled_tanh_bias() {
        let mut agent = DdpgAgent::new(2, &[2.0], tiny_hyper(), &mut rng(2)).unwrap();
        let actor = Mlp::from_layers(vec![Layer {
            in_dim: 2,
            out_dim: 1,
            activation: Activation::Tanh,
            weights: vec![0.0, 0.0],
            bias: vec![0.7],
        }])
        .unwrap();
        agent.install_actor(actor).unwrap();
        let a = agent.act(&[3.0, -1.0]).unwrap();
        assert!((a[0] - 2.0 * 0.7f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn act_is_deterministic_and_matches_forward() {
        let agent = DdpgAgent::new(3, &[2.0], tiny_hyper(), &mut rng(3)).unwrap();
        let s = [0.3, -0.8, 0.1];
        let a1 = agent.act(&s).unwrap();
        let a2 = agent.act(&s).unwrap();
        assert_eq!(a1, a2);
        let forward = agent.actor().forward(&s).unwrap();
        assert_eq!(a1[0], forward[0] * 2.0);
    }

    #[test]
    fn targets_equal_mains_at_construction() {
        let agent = DdpgAgent::new(4, &[1.0, 3.0], tiny_hyper(), &mut rng(4)).unwrap();
        assert_eq!(
            serde_json::to_string(agent.actor()).unwrap(),
            serde_json::to_string(agent.target_actor()).unwrap()
        );
        assert_eq!(
            serde_json::to_string(agent.critic()).unwrap(),
            serde_json::to_string(agent.target_critic()).unwrap()
        );
    }

    #[test]
    fn ou_noise_decays_deterministically_without_sigma() {
        let mut noise = OuNoise::with_params(1, 0.15, 0.0);
        noise.set_state(&[1.0]);
        let mut r = rng(5);
        for k in 1..=20 {
            noise.step(&mut r);
            let want = 0.85f64.powi(k);
            assert!((noise.state()[0] - want).abs() < 1e-12, "step {k}");
        }
    }

    #[test]
    fn ou_noise_matches_ar1_stationary_moments() {
        let mut noise = OuNoise::new(1);
        let mut r = rng(6);
        let steps = 1_000_000;
        // Discard burn-in so the chain forgets the zero start.
        for _ in 0..1000 {
            noise.step(&mut r);
        }
        let mut prev = noise.state()[0];
        let (mut sum, mut sum_sq, mut lag) = (0.0, 0.0, 0.0);
        for _ in 0..steps {
            let x = noise.step(&mut r)[0];
            sum += x;
            sum_sq += x * x;
            lag += x * prev;
            prev = x;
        }
        let n = steps as f64;
        let mean = sum / n;
        let var = sum_sq / n - mean * mean;
        let want_var = 1.0 / (1.0 - 0.85f64 * 0.85);
        assert!(
            (var - want_var).abs() / want_var < 0.05,
            "variance {var:.4}, expected {want_var:.4}"
        );
        let autocorr = (lag / n - mean * mean) / var;
        assert!(
            (autocorr - 0.85).abs() < 0.02,
            "lag-1 autocorrelation {autocorr:.4}"
        );
    }

    #[test]
    fn ou_noise_resets_to_zero() {
        let mut noise = OuNoise::new(3);
        noise.step(&mut rng(7));
        assert!(noise.state().iter().any(|&x| x != 0.0));
        noise.reset();
        assert!(noise.state().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn critic_converges_to_scaled_reward_without_bootstrap() {
        let hyper = HyperParams {
            discount: 0.0,
            ..tiny_hyper()
        };
        let mut agent = DdpgAgent::new(2, &[1.0], hyper, &mut rng(8)).unwrap();
        let t = transition(vec![0.4, -0.2], vec![0.3], 5.0);
        let batch: Vec<&Transition> = vec![&t; 8];
        for _ in 0..4000 {
            agent.critic_update(&batch).unwrap();
        }
        let q = agent.critic_value(&t.state, &t.action).unwrap();
        let want = 5.0 * 0.01;
        assert!((q - want).abs() < 1e-3, "Q converged to {q}, want {want}");
    }

    #[test]
    fn critic_loss_matches_hand_computed_residuals() {
        let agent = DdpgAgent::new(2, &[1.0], tiny_hyper(), &mut rng(9)).unwrap();
        let t1 = transition(vec![0.1, 0.2], vec![0.5], 1.0);
        let t2 = transition(vec![-0.3, 0.7], vec![-0.2], -2.0);
        // Hand-compute the pre-step loss with frozen nets.
        let mut want = 0.0;
        for t in [&t1, &t2] {
            let y = agent.td_target(t).unwrap();
            let q = agent.critic_value(&t.state, &t.action).unwrap();
            want += (q - y) * (q - y) / 2.0;
        }
        let mut agent = agent;
        let loss = agent.critic_update(&[&t1, &t2]).unwrap();
        assert!((loss - want).abs() < 1e-12, "loss {loss}, want {want}");
    }

    #[test]
    fn td_target_masks_bootstrap_on_terminal() {
        let agent = DdpgAgent::new(2, &[1.0], tiny_hyper(), &mut rng(10)).unwrap();
        let mut t = transition(vec![0.1, 0.2], vec![0.5], 3.0);
        t.terminal = true;
        assert_eq!(agent.td_target(&t).unwrap(), 3.0 * 0.01);
        t.terminal = false;
        assert_ne!(agent.td_target(&t).unwrap(), 3.0 * 0.01);
    }

    /// Hand-built critic Q(s, a) = -|a| via relu(a) + relu(-a): the actor
    /// should move its action toward zero from either side.
    #[test]
    fn actor_update_climbs_the_critic() {
        for &a0 in &[0.6f64, -0.6] {
            let mut agent = DdpgAgent::new(1, &[2.0], tiny_hyper(), &mut rng(11)).unwrap();
            let critic = Mlp::from_layers(vec![
                Layer {
                    in_dim: 2,
                    out_dim: 2,
                    activation: Activation::Relu,
                    // Rows read [state, action]; both units ignore state.
                    weights: vec![0.0, 1.0, 0.0, -1.0],
                    bias: vec![0.0, 0.0],
                },
                Layer {
                    in_dim: 2,
                    out_dim: 1,
                    activation: Activation::Linear,
                    weights: vec![-1.0, -1.0],
                    bias: vec![0.0],
                },
            ])
            .unwrap();
            agent.install_critic(critic).unwrap();
            let actor = Mlp::from_layers(vec![Layer {
                in_dim: 1,
                out_dim: 1,
                activation: Activation::Tanh,
                weights: vec![0.0],
                bias: vec![(a0 / 2.0f64).atanh()],
            }])
            .unwrap();
            agent.install_actor(actor).unwrap();

            let s = [0.5];
            assert!((agent.act(&s).unwrap()[0] - a0).abs() < 1e-12);
            let t = transition(vec![0.5], vec![a0], 0.0);
            for _ in 0..20 {
                agent.actor_update(&[&t]).unwrap();
            }
            let a = agent.act(&s).unwrap()[0];
            assert!(
                a.abs() < a0.abs() && a.signum() == a0.signum(),
                "action moved from {a0} to {a}"
            );
        }
    }

    #[test]
    fn constant_critic_leaves_actor_unchanged() {
        let mut agent = DdpgAgent::new(1, &[1.0], tiny_hyper(), &mut rng(12)).unwrap();
        let critic = Mlp::from_layers(vec![Layer {
            in_dim: 2,
            out_dim: 1,
            activation: Activation::Linear,
            weights: vec![0.0, 0.0],
            bias: vec![7.0],
        }])
        .unwrap();
        agent.install_critic(critic).unwrap();
        let before = serde_json::to_string(agent.actor()).unwrap();
        let t = transition(vec![0.2], vec![0.1], 0.0);
        agent.actor_update(&[&t]).unwrap();
        assert_eq!(serde_json::to_string(agent.actor()).unwrap(), before);
    }

    #[test]
    fn soft_update_with_full_tau_copies_mains() {
        let hyper = HyperParams { tau: 1.0, ..tiny_hyper() };
        let mut agent = DdpgAgent::new(2, &[1.0], hyper, &mut rng(13)).unwrap();
        let t = transition(vec![0.1, -0.1], vec![0.2], 1.0);
        agent.critic_update(&[&t]).unwrap();
        agent.actor_update(&[&t]).unwrap();
        assert_ne!(
            serde_json::to_string(agent.critic()).unwrap(),
            serde_json::to_string(agent.target_critic()).unwrap()
        );
        agent.soft_target_update();
        assert_eq!(
            serde_json::to_string(agent.critic()).unwrap(),
            serde_json::to_string(agent.target_critic()).unwrap()
        );
        assert_eq!(
            serde_json::to_string(agent.actor()).unwrap(),
            serde_json::to_string(agent.target_actor()).unwrap()
        );
    }

    #[test]
    fn repeated_soft_updates_follow_geometric_closed_form() {
        let mut agent = DdpgAgent::new(2, &[1.0], tiny_hyper(), &mut rng(14)).unwrap();
        let t = transition(vec![0.1, -0.1], vec![0.2], 1.0);
        agent.critic_update(&[&t]).unwrap();
        let main = agent.critic().layers()[0].weights[0];
        let start = agent.target_critic().layers()[0].weights[0];
        let k = 30;
        for _ in 0..k {
            agent.soft_target_update();
        }
        let want = main + 0.99f64.powi(k) * (start - main);
        let got = agent.target_critic().layers()[0].weights[0];
        assert!((got - want).abs() < 1e-12, "target {got}, closed form {want}");
    }

    #[test]
    fn train_step_applies_target_updates_on_schedule() {
        let hyper = HyperParams {
            target_update_interval: 100,
            layer_size: 16,
            minibatch_size: 16,
            replay_steps: 16,
            ..HyperParams::default()
        };
        let mut agent = DdpgAgent::new(2, &[1.0], hyper, &mut rng(15)).unwrap();
        let mut buffer = ReplayBuffer::new(100).unwrap();
        let mut r = rng(16);
        for _ in 0..32 {
            buffer.push(transition(
                vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)],
                vec![r.random_range(-1.0..1.0)],
                r.random_range(-1.0..1.0),
            ));
        }
        let snapshot = |agent: &DdpgAgent| serde_json::to_string(agent.target_critic()).unwrap();
        let mut updated_at = Vec::new();
        let mut before = snapshot(&agent);
        for call in 1..=250 {
            agent.train_step(&buffer, &mut r).unwrap();
            let after = snapshot(&agent);
            if after != before {
                updated_at.push(call);
                before = after;
            }
        }
        assert_eq!(updated_at, vec![100, 200]);
    }

    #[test]
    fn train_step_without_data_changes_nothing() {
        let mut agent = DdpgAgent::new(2, &[1.0], tiny_hyper(), &mut rng(17)).unwrap();
        let buffer = ReplayBuffer::new(100).unwrap();
        let before = agent.to_json().unwrap();
        let skipped = agent.train_step(&buffer, &mut rng(18)).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(agent.to_json().unwrap(), before);
        assert_eq!(agent.step_counter(), 0);
    }

    #[test]
    fn train_step_runs_expected_minibatch_count() {
        // replay_steps 64 with minibatch 16 must consume 4 fresh batches:
        // observable through the optimizer step counter.
        let hyper = HyperParams {
            layer_size: 16,
            minibatch_size: 16,
            replay_steps: 64,
            ..HyperParams::default()
        };
        let mut agent = DdpgAgent::new(2, &[1.0], hyper, &mut rng(19)).unwrap();
        let mut buffer = ReplayBuffer::new(100).unwrap();
        for i in 0..20 {
            buffer.push(transition(vec![0.1 * i as f64, 0.0], vec![0.0], 0.0));
        }
        let mut r = rng(20);
        agent.train_step(&buffer, &mut r).unwrap();
        assert_eq!(agent.critic_opt.step_count(), 4);
        assert_eq!(agent.actor_opt.step_count(), 4);
        assert_eq!(agent.step_counter(), 1);
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let mut agent = DdpgAgent::new(3, &[2.0], tiny_hyper(), &mut rng(21)).unwrap();
        let mut buffer = ReplayBuffer::new(64).unwrap();
        let mut r = rng(22);
        for _ in 0..20 {
            buffer.push(transition(
                vec![r.random_range(-1.0..1.0); 3],
                vec![r.random_range(-1.0..1.0)],
                r.random_range(-1.0..1.0),
            ));
        }
        for _ in 0..5 {
            agent.train_step(&buffer, &mut r).unwrap();
        }
        let json = agent.to_json().unwrap();
        let restored = DdpgAgent::from_json(&json).unwrap();
        assert_eq!(restored.to_json().unwrap(), json);
        assert_eq!(restored.step_counter(), agent.step_counter());
        let s = [0.3, -0.3, 0.9];
        assert_eq!(restored.act(&s).unwrap(), agent.act(&s).unwrap());
    }
}
