//! Minimal dense-network engine.
//!
//! Fixed multilayer perceptrons in 64-bit floats: forward pass, exact
//! reverse-mode gradients, and Adam. Nothing here knows about agents or
//! environments; the actor and critic of every ensemble member are plain
//! [`Mlp`] values, and the ensemble's critic weights reuse [`AdamState`]
//! over a flat parameter vector.
//!
//! All operations are pure with respect to their inputs; a network is only
//! mutated through `adam_step` and `polyak`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Element-wise (or, for softmax, vector-wise) layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    /// Softmax over the whole layer output. Unusual as a hidden activation,
    /// but part of the supported hyperparameter domain.
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for x in z.iter_mut() {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for x in z.iter_mut() {
                    *x = x.tanh();
                }
            }
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Converts an upstream gradient `d_out` into a pre-activation gradient,
    /// given the post-activation outputs `y`.
    fn backprop(self, y: &[f64], d_out: &mut [f64]) {
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for (d, &yi) in d_out.iter_mut().zip(y) {
                    if yi <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (d, &yi) in d_out.iter_mut().zip(y) {
                    *d *= 1.0 - yi * yi;
                }
            }
            Activation::Softmax => {
                // dz_i = y_i * (d_i - sum_j d_j y_j)
                let mut dot = 0.0;
                for (&d, &yi) in d_out.iter().zip(y) {
                    dot += d * yi;
                }
                for (d, &yi) in d_out.iter_mut().zip(y) {
                    *d = yi * (*d - dot);
                }
            }
        }
    }
}

/// One dense layer: `y = activation(W x + b)` with `W` row-major
/// `(out_dim, in_dim)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A fixed stack of dense layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Parameter gradients with the same shapes as the network they came from.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer post-activation record of one forward pass, reusable across
/// calls to avoid reallocation in training loops.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    /// Output of the final layer from the last traced forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds no forward pass")
    }
}

/// Dot product of `w` and `x` with four independent accumulators so the
/// compiler can keep the FMA pipeline full.
#[inline]
fn dot(w: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), x.len());
    let chunks = x.len() / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut i = 0;
    while i < chunks {
        s0 = w[i].mul_add(x[i], s0);
        s1 = w[i + 1].mul_add(x[i + 1], s1);
        s2 = w[i + 2].mul_add(x[i + 2], s2);
        s3 = w[i + 3].mul_add(x[i + 3], s3);
        i += 4;
    }
    let mut tail = 0.0;
    while i < x.len() {
        tail = w[i].mul_add(x[i], tail);
        i += 1;
    }
    (s0 + s1) + (s2 + s3) + tail
}

impl Layer {
    fn check(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::config("layer dimensions must be positive"));
        }
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::config(format!(
                "layer coefficient counts do not match dims {}x{}",
                self.out_dim, self.in_dim
            )));
        }
        if !self.weights.iter().chain(&self.bias).all(|x| x.is_finite()) {
            return Err(Error::numeric("layer holds non-finite coefficients"));
        }
        Ok(())
    }

    #[inline]
    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (o, z) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *z += dot(row, input);
        }
        self.activation.apply(out);
    }
}

impl Mlp {
    /// Builds a network with the given layer sizes and activations,
    /// coefficients drawn uniformly from `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    ///
    /// `dims` has one more entry than `activations`: `dims[k] -> dims[k+1]`
    /// under `activations[k]`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::config(
                "need at least one layer and one activation per layer",
            ));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (k, &act) in activations.iter().enumerate() {
            let (in_dim, out_dim) = (dims[k], dims[k + 1]);
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::config("layer dimensions must be positive"));
            }
            let limit = 1.0 / (in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            let bias = (0..out_dim).map(|_| rng.random_range(-limit..=limit)).collect();
            layers.push(Layer {
                in_dim,
                out_dim,
                activation: act,
                weights,
                bias,
            });
        }
        Ok(Mlp { layers })
    }

    /// Wraps explicit layers, validating shape compatibility. This is the
    /// entry point for deserialized parameter snapshots and hand-built nets.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for layer in &layers {
            layer.check()?;
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::config(format!(
                    "layer output dim {} does not feed next input dim {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Final-layer activations for `input`.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = Trace::default();
        self.forward_traced(input, &mut trace)?;
        Ok(trace.acts.pop().unwrap())
    }

    /// Forward pass that records every layer's output into `trace`,
    /// reusing its buffers.
    pub fn forward_traced(&self, input: &[f64], trace: &mut Trace) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::config(format!(
                "input length {} does not match network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        trace.acts.resize(self.layers.len() + 1, Vec::new());
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(input);
        for (k, layer) in self.layers.iter().enumerate() {
            let (head, tail) = trace.acts.split_at_mut(k + 1);
            layer.forward_into(&head[k], &mut tail[0]);
        }
        Ok(())
    }

    /// Reverse-mode gradients of `<upstream, forward(input)>` with respect to
    /// every coefficient and the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut trace = Trace::default();
        self.forward_traced(input, &mut trace)?;
        let mut grads = Gradients::zeros_like(self);
        let mut input_grad = vec![0.0; self.input_dim()];
        self.backward_traced(&trace, upstream, &mut grads, Some(&mut input_grad))?;
        Ok((grads, input_grad))
    }

    /// Backward pass over a recorded forward trace. Parameter gradients are
    /// accumulated (`+=`) into `grads`; the input gradient, when requested,
    /// is overwritten.
    pub fn backward_traced(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grads: &mut Gradients,
        input_grad: Option<&mut [f64]>,
    ) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(Error::config(format!(
                "upstream length {} does not match network output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        debug_assert_eq!(trace.acts.len(), self.layers.len() + 1);

        let mut d_out = upstream.to_vec();
        let mut d_in: Vec<f64> = Vec::new();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let y = &trace.acts[k + 1];
            let x = &trace.acts[k];
            layer.activation.backprop(y, &mut d_out);

            let lg = &mut grads.layers[k];
            d_in.clear();
            d_in.resize(layer.in_dim, 0.0);
            for (o, &dz) in d_out.iter().enumerate() {
                lg.bias[o] += dz;
                let row = o * layer.in_dim;
                let wrow = &layer.weights[row..row + layer.in_dim];
                let grow = &mut lg.weights[row..row + layer.in_dim];
                for i in 0..layer.in_dim {
                    grow[i] = dz.mul_add(x[i], grow[i]);
                    d_in[i] = wrow[i].mul_add(dz, d_in[i]);
                }
            }
            std::mem::swap(&mut d_out, &mut d_in);
        }
        if let Some(ig) = input_grad {
            ig.copy_from_slice(&d_out);
        }
        Ok(())
    }

    /// Input gradient of `<upstream, forward(input)>` over a recorded trace,
    /// skipping parameter gradients. Used where a network only routes
    /// gradients downstream (e.g. a critic inside the actor objective).
    pub fn input_gradient_traced(
        &self,
        trace: &Trace,
        upstream: &[f64],
        input_grad: &mut Vec<f64>,
    ) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(Error::config(format!(
                "upstream length {} does not match network output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut d_out = upstream.to_vec();
        let mut d_in: Vec<f64> = Vec::new();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let y = &trace.acts[k + 1];
            layer.activation.backprop(y, &mut d_out);
            d_in.clear();
            d_in.resize(layer.in_dim, 0.0);
            for (o, &dz) in d_out.iter().enumerate() {
                let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    d_in[i] = wrow[i].mul_add(dz, d_in[i]);
                }
            }
            std::mem::swap(&mut d_out, &mut d_in);
        }
        input_grad.clear();
        input_grad.extend_from_slice(&d_out);
        Ok(())
    }

    /// One Adam step over all coefficients. Rejects non-finite gradients
    /// without touching the network or optimizer state.
    pub fn adam_step(&mut self, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
        if lr <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        if grads.layers.len() != self.layers.len()
            || state.len() != self.param_count()
            || grads
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len())
        {
            return Err(Error::config("gradient/optimizer shapes do not match network"));
        }
        for lg in &grads.layers {
            if !lg.weights.iter().chain(&lg.bias).all(|g| g.is_finite()) {
                return Err(Error::numeric("non-finite gradient; update rejected"));
            }
        }
        let ctx = state.begin_step();
        let mut offset = 0;
        for (layer, lg) in self.layers.iter_mut().zip(&grads.layers) {
            state.apply_segment(&ctx, offset, &mut layer.weights, &lg.weights, lr);
            offset += layer.weights.len();
            state.apply_segment(&ctx, offset, &mut layer.bias, &lg.bias, lr);
            offset += layer.bias.len();
        }
        debug_assert!(self
            .layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite())));
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for lg in &mut self.layers {
            lg.weights.fill(0.0);
            lg.bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for lg in &mut self.layers {
            for g in lg.weights.iter_mut().chain(lg.bias.iter_mut()) {
                *g *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|lg| lg.weights.iter().chain(&lg.bias).all(|g| g.is_finite()))
    }
}

/// Blends `main` into `target`: `target <- (1 - tau) * target + tau * main`.
pub fn polyak(target: &mut Mlp, main: &Mlp, tau: f64) {
    debug_assert_eq!(target.param_count(), main.param_count());
    for (tl, ml) in target.layers.iter_mut().zip(&main.layers) {
        for (t, &m) in tl
            .weights
            .iter_mut()
            .chain(tl.bias.iter_mut())
            .zip(ml.weights.iter().chain(&ml.bias))
        {
            *t = (1.0 - tau) * *t + tau * m;
        }
    }
}

/// Adam moment accumulators over a flat parameter vector with bias
/// correction. Defaults: `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

pub struct AdamStepCtx {
    inv_bias1: f64,
    inv_bias2: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Number of applied steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advances the step counter and returns the bias-correction factors for
    /// this step. Segments of the parameter vector are then updated through
    /// `apply_segment` with the same context.
    pub fn begin_step(&mut self) -> AdamStepCtx {
        self.step += 1;
        let t = self.step as i32;
        AdamStepCtx {
            inv_bias1: 1.0 / (1.0 - self.beta1.powi(t)),
            inv_bias2: 1.0 / (1.0 - self.beta2.powi(t)),
        }
    }

    /// Adam update of `params` from `grads`, with moments stored at
    /// `offset..offset + params.len()`.
    pub fn apply_segment(
        &mut self,
        ctx: &AdamStepCtx,
        offset: usize,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
    ) {
        debug_assert_eq!(params.len(), grads.len());
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] * ctx.inv_bias1;
            let v_hat = v[i] * ctx.inv_bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    /// One-shot update of a full flat parameter vector (used for the
    /// ensemble's critic weights). Rejects non-finite gradients untouched.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(Error::config("flat adam shapes do not match state"));
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::numeric("non-finite gradient; update rejected"));
        }
        let ctx = self.begin_step();
        self.apply_segment(&ctx, 0, params, grads, lr);
        Ok(())
    }
}

/// Numerically stable softmax: strictly positive outputs summing to one.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::config("softmax of an empty vector"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// In-place softmax with max subtraction. `v` must be non-empty.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn linear_layer(weights: Vec<f64>, bias: Vec<f64>, in_dim: usize, act: Activation) -> Layer {
        let out_dim = bias.len();
        Layer {
            in_dim,
            out_dim,
            activation: act,
            weights,
            bias,
        }
    }

    /// Straight-line scalar evaluator, independent of the Mlp forward path.
    fn naive_forward(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for layer in mlp.layers() {
            let mut z = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let mut acc = layer.bias[o];
                for i in 0..layer.in_dim {
                    acc += layer.weights[o * layer.in_dim + i] * x[i];
                }
                z[o] = acc;
            }
            match layer.activation {
                Activation::Linear => {}
                Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
                Activation::Softmax => {
                    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = exps.iter().sum();
                    z = exps.into_iter().map(|e| e / s).collect();
                }
            }
            x = z;
        }
        x
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_layers(vec![linear_layer(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            2,
            Activation::Linear,
        )])
        .unwrap();
        assert_eq!(mlp.forward(&[3.0, -2.0]).unwrap(), vec![3.0, -2.0]);
    }

    #[test]
    fn relu_clips_negative_preactivation() {
        let mlp = Mlp::from_layers(vec![linear_layer(
            vec![1.0],
            vec![-1.0],
            1,
            Activation::Relu,
        )])
        .unwrap();
        assert_eq!(mlp.forward(&[0.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_matches_naive_evaluator() {
        let mut r = rng(11);
        for &act in &[
            Activation::Relu,
            Activation::Tanh,
            Activation::Softmax,
            Activation::Linear,
        ] {
            let mlp = Mlp::new(&[5, 17, 9, 3], &[act, act, Activation::Linear], &mut r).unwrap();
            let input: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
            let got = mlp.forward(&input).unwrap();
            let want = naive_forward(&mlp, &input);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "got {g}, want {w}");
            }
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let mlp = Mlp::new(&[3, 4, 1], &[Activation::Relu, Activation::Linear], &mut rng(0)).unwrap();
        assert!(matches!(mlp.forward(&[1.0, 2.0]), Err(Error::Config(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mlp = Mlp::new(&[4, 8, 2], &[Activation::Tanh, Activation::Linear], &mut rng(1)).unwrap();
        let (grads, input_grad) = mlp.backward(&[0.1, -0.2, 0.3, 0.4], &[0.0, 0.0]).unwrap();
        assert!(grads
            .layers
            .iter()
            .all(|lg| lg.weights.iter().chain(&lg.bias).all(|&g| g == 0.0)));
        assert!(input_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_linear_layer_gradients_match_closed_form() {
        let w = vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75];
        let mlp = Mlp::from_layers(vec![linear_layer(
            w.clone(),
            vec![0.1, -0.2],
            3,
            Activation::Linear,
        )])
        .unwrap();
        let x = [1.0, -2.0, 0.5];
        let u = [2.0, -3.0];
        let (grads, input_grad) = mlp.backward(&x, &u).unwrap();

        // weight grad = u x^T, bias grad = u, input grad = W^T u
        for o in 0..2 {
            for i in 0..3 {
                assert!((grads.layers[0].weights[o * 3 + i] - u[o] * x[i]).abs() < 1e-15);
            }
            assert!((grads.layers[0].bias[o] - u[o]).abs() < 1e-15);
        }
        for i in 0..3 {
            let want = w[i] * u[0] + w[3 + i] * u[1];
            assert!((input_grad[i] - want).abs() < 1e-15);
        }
    }

    /// Central finite differences of <upstream, forward(input)> over every
    /// coefficient of a random two-hidden-layer net.
    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(2);
        for &act in &[Activation::Tanh, Activation::Softmax] {
            let mut mlp =
                Mlp::new(&[4, 12, 10, 3], &[act, act, Activation::Linear], &mut r).unwrap();
            let input: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
            let upstream: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let (grads, input_grads) = mlp.backward(&input, &upstream).unwrap();

            let h = 1e-5;
            let scalar = |mlp: &Mlp, x: &[f64]| -> f64 {
                mlp.forward(x)
                    .unwrap()
                    .iter()
                    .zip(&upstream)
                    .map(|(y, u)| y * u)
                    .sum()
            };
            for k in 0..mlp.layers.len() {
                for p in 0..mlp.layers[k].weights.len() {
                    let orig = mlp.layers[k].weights[p];
                    mlp.layers[k].weights[p] = orig + h;
                    let plus = scalar(&mlp, &input);
                    mlp.layers[k].weights[p] = orig - h;
                    let minus = scalar(&mlp, &input);
                    mlp.layers[k].weights[p] = orig;
                    let numeric = (plus - minus) / (2.0 * h);
                    let analytic = grads.layers[k].weights[p];
                    let denom = analytic.abs().max(numeric.abs());
                    if analytic.abs() > 1e-8 {
                        assert!(
                            (analytic - numeric).abs() / denom < 1e-4,
                            "layer {k} weight {p}: analytic {analytic}, numeric {numeric}"
                        );
                    }
                }
            }
            let mut input_var = input.clone();
            for i in 0..input_var.len() {
                let orig = input_var[i];
                input_var[i] = orig + h;
                let plus = scalar(&mlp, &input_var);
                input_var[i] = orig - h;
                let minus = scalar(&mlp, &input_var);
                input_var[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = input_grads[i];
                if analytic.abs() > 1e-8 {
                    assert!((analytic - numeric).abs() / analytic.abs().max(numeric.abs()) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn input_gradient_only_path_matches_full_backward() {
        let mut r = rng(9);
        let mlp = Mlp::new(&[6, 14, 5], &[Activation::Relu, Activation::Linear], &mut r).unwrap();
        let input: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, want) = mlp.backward(&input, &upstream).unwrap();
        let mut trace = Trace::default();
        mlp.forward_traced(&input, &mut trace).unwrap();
        let mut got = Vec::new();
        mlp.input_gradient_traced(&trace, &upstream, &mut got).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut mlp = Mlp::new(&[2, 3, 1], &[Activation::Relu, Activation::Linear], &mut rng(3)).unwrap();
        let before = mlp.clone();
        let grads = Gradients::zeros_like(&mlp);
        let mut state = AdamState::new(mlp.param_count());
        mlp.adam_step(&grads, &mut state, 0.001).unwrap();
        assert_eq!(state.step_count(), 1);
        for (a, b) in mlp.layers.iter().zip(before.layers.iter()) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn adam_first_step_matches_hand_computation() {
        // scalar param 0, grad 2, lr 1e-3:
        // m_hat = 2, v_hat = 4, step = -lr * 2 / (2 + 1e-8)
        let mut mlp = Mlp::from_layers(vec![linear_layer(
            vec![0.0],
            vec![0.0],
            1,
            Activation::Linear,
        )])
        .unwrap();
        let mut grads = Gradients::zeros_like(&mlp);
        grads.layers[0].weights[0] = 2.0;
        let mut state = AdamState::new(2);
        mlp.adam_step(&grads, &mut state, 0.001).unwrap();
        let expected = -0.001 * 2.0 / (2.0 + 1e-8);
        assert!((mlp.layers[0].weights[0] - expected).abs() < 1e-15);
        assert!((mlp.layers[0].weights[0] - (-0.0009999995)).abs() < 1e-9);
        assert_eq!(mlp.layers[0].bias[0], 0.0);
    }

    #[test]
    fn adam_identical_params_stay_identical() {
        let mut mlp = Mlp::from_layers(vec![linear_layer(
            vec![0.5, 0.5],
            vec![0.0],
            2,
            Activation::Linear,
        )])
        .unwrap();
        let mut grads = Gradients::zeros_like(&mlp);
        let mut state = AdamState::new(3);
        for step in 0..25 {
            let g = (step as f64 * 0.37).sin() + 0.1;
            grads.layers[0].weights[0] = g;
            grads.layers[0].weights[1] = g;
            mlp.adam_step(&grads, &mut state, 0.01).unwrap();
            assert_eq!(mlp.layers[0].weights[0], mlp.layers[0].weights[1]);
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut mlp = Mlp::new(&[2, 2], &[Activation::Linear], &mut rng(4)).unwrap();
        let before = mlp.clone();
        let mut grads = Gradients::zeros_like(&mlp);
        grads.layers[0].weights[1] = f64::NAN;
        let mut state = AdamState::new(mlp.param_count());
        let err = mlp.adam_step(&grads, &mut state, 0.001).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(state.step_count(), 0);
        assert_eq!(mlp.layers[0].weights, before.layers[0].weights);
    }

    #[test]
    fn adam_is_bitwise_deterministic() {
        let build = || {
            let mut mlp =
                Mlp::new(&[3, 5, 2], &[Activation::Tanh, Activation::Linear], &mut rng(5)).unwrap();
            let mut state = AdamState::new(mlp.param_count());
            let mut grads = Gradients::zeros_like(&mlp);
            for step in 0..10 {
                for lg in &mut grads.layers {
                    for (i, g) in lg.weights.iter_mut().enumerate() {
                        *g = ((step * 31 + i) as f64 * 0.123).cos();
                    }
                }
                mlp.adam_step(&grads, &mut state, 0.002).unwrap();
            }
            mlp
        };
        let a = build();
        let b = build();
        for (la, lb) in a.layers.iter().zip(b.layers.iter()) {
            for (x, y) in la.weights.iter().zip(&lb.weights) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn polyak_with_tau_one_copies_mains() {
        let main = Mlp::new(&[2, 4, 1], &[Activation::Relu, Activation::Linear], &mut rng(6)).unwrap();
        let mut target = Mlp::new(&[2, 4, 1], &[Activation::Relu, Activation::Linear], &mut rng(7)).unwrap();
        polyak(&mut target, &main, 1.0);
        for (t, m) in target.layers.iter().zip(main.layers.iter()) {
            assert_eq!(t.weights, m.weights);
        }
    }

    #[test]
    fn polyak_matches_direct_formula() {
        let main = Mlp::from_layers(vec![linear_layer(vec![1.0], vec![1.0], 1, Activation::Linear)])
            .unwrap();
        let mut target =
            Mlp::from_layers(vec![linear_layer(vec![0.0], vec![0.0], 1, Activation::Linear)])
                .unwrap();
        polyak(&mut target, &main, 0.01);
        assert!((target.layers[0].weights[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn repeated_polyak_follows_geometric_closed_form() {
        let main = Mlp::from_layers(vec![linear_layer(vec![2.0], vec![-1.0], 1, Activation::Linear)])
            .unwrap();
        let mut target =
            Mlp::from_layers(vec![linear_layer(vec![-3.0], vec![4.0], 1, Activation::Linear)])
                .unwrap();
        let tau = 0.01;
        let k = 50;
        for _ in 0..k {
            polyak(&mut target, &main, tau);
        }
        let closed = |main: f64, start: f64| main + (1.0 - tau).powi(k) * (start - main);
        assert!((target.layers[0].weights[0] - closed(2.0, -3.0)).abs() < 1e-12);
        assert!((target.layers[0].bias[0] - closed(-1.0, 4.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_closed_form_value() {
        let out = softmax(&[0.0, 2.0f64.ln()]).unwrap();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_empty_input() {
        assert!(matches!(softmax(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn snapshot_round_trip_preserves_coefficients() {
        let mlp = Mlp::new(
            &[3, 16, 16, 2],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
            &mut rng(8),
        )
        .unwrap();
        let json = serde_json::to_string(&mlp).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        for (a, b) in mlp.layers.iter().zip(back.layers.iter()) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
            assert_eq!(a.activation, b.activation);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(v in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let out = softmax(&v).unwrap();
            let sum: f64 = out.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(out.iter().all(|&p| p > 0.0));
        }

        #[test]
        fn softmax_is_shift_invariant(
            v in proptest::collection::vec(-20.0f64..20.0, 1..8),
            c in -100.0f64..100.0,
        ) {
            let base = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let out = softmax(&shifted).unwrap();
            for (a, b) in base.iter().zip(&out) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn uniform_input_gives_uniform_softmax(c in -100.0f64..100.0, n in 1usize..9) {
            let out = softmax(&vec![c; n]).unwrap();
            for p in out {
                prop_assert!((p - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }
}
