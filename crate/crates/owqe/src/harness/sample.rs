//! Uniform random draws from the supported hyperparameter domains.

use rand::Rng;

use crate::agent::HyperParams;
use crate::nnet::Activation;

/// Options for the soft-target-update period.
pub const TARGET_UPDATE_INTERVALS: [usize; 2] = [10, 100];
/// Options for the Adam learning rate of actor and critic.
pub const LEARNING_RATES: [f64; 2] = [0.001, 0.0001];
/// Options for training samples consumed per environment step.
pub const REPLAY_STEPS: [usize; 3] = [64, 128, 256];
/// Options for the minibatch size.
pub const MINIBATCH_SIZES: [usize; 3] = [16, 64, 128];
/// Options for the hidden-layer width.
pub const LAYER_SIZES: [usize; 5] = [50, 100, 200, 300, 400];
/// Options for the hidden activation.
pub const ACTIVATIONS: [Activation; 2] = [Activation::Relu, Activation::Softmax];

fn choose<T: Copy, R: Rng + ?Sized>(rng: &mut R, options: &[T]) -> T {
    options[rng.random_range(0..options.len())]
}

/// Draws one parameterization uniformly and independently from each varied
/// domain; discount, reward scale, and tau stay at their fixed defaults.
/// Draws whose replay steps are not a multiple of the minibatch size are
/// rejected and redrawn, leaving a uniform distribution over the valid
/// combinations.
pub fn sample_parameterization<R: Rng + ?Sized>(rng: &mut R) -> HyperParams {
    loop {
        let hp = HyperParams {
            target_update_interval: choose(rng, &TARGET_UPDATE_INTERVALS),
            learning_rate: choose(rng, &LEARNING_RATES),
            replay_steps: choose(rng, &REPLAY_STEPS),
            minibatch_size: choose(rng, &MINIBATCH_SIZES),
            layer_size: choose(rng, &LAYER_SIZES),
            activation: choose(rng, &ACTIVATIONS),
            ..HyperParams::default()
        };
        if hp.replay_steps % hp.minibatch_size == 0 {
            return hp;
        }
    }
}
