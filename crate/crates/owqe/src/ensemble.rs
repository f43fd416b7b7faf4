//! Weighted Q-ensembles over DDPG members.
//!
//! Every member proposes an action for the current state; every critic
//! scores every proposal, giving a square Q-matrix. Scores are optionally
//! made comparable across critics by a per-critic softmax over the
//! proposals, then blended into one score per proposal by the (uniform or
//! learned) ensemble weights; the best-scoring proposal becomes the
//! ensemble action.
//!
//! Learned weights descend the weighted mean of the members' squared TD
//! errors, so members whose critics track their targets well gain influence
//! online, while training is still running.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{DdpgAgent, OuNoise};
use crate::envs::Environment;
use crate::metrics::RunRecord;
use crate::nnet::{softmax, softmax_in_place, AdamState};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Cross-evaluation of one state: `actions[j]` is member j's proposal and
/// `value(i, j)` is critic i's score for proposal j.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    actions: Vec<Vec<f64>>,
    /// Row-major n x n: row = critic, column = proposed action.
    values: Vec<f64>,
    n: usize,
}

impl QMatrix {
    /// Wraps raw parts, enforcing squareness and finiteness.
    pub fn new(actions: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let n = actions.len();
        if n == 0 {
            return Err(Error::config("Q-matrix needs at least one member"));
        }
        if values.len() != n * n {
            return Err(Error::config(format!(
                "Q-matrix needs {n}x{n} values, got {}",
                values.len()
            )));
        }
        let da = actions[0].len();
        if da == 0 || actions.iter().any(|a| a.len() != da) {
            return Err(Error::config("Q-matrix actions must share a positive dim"));
        }
        if !values.iter().all(|v| v.is_finite())
            || !actions.iter().flatten().all(|v| v.is_finite())
        {
            return Err(Error::numeric("non-finite Q-matrix entry"));
        }
        Ok(QMatrix { actions, values, n })
    }

    /// Test/diagnostic convenience: build from per-critic rows.
    pub fn from_rows(actions: Vec<Vec<f64>>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = actions.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::config("row count/length must equal action count"));
        }
        QMatrix::new(actions, rows.into_iter().flatten().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// How critic scores are combined across the ensemble.
///
/// Two independent switches span the four variants: whether rows are
/// softmax-normalized before blending, and whether the blending weights are
/// learned from TD errors (otherwise uniform).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregationStrategy {
    Average,
    SoftmaxAverage,
    TDError,
    SoftmaxTDError,
}

impl AggregationStrategy {
    pub const ALL: [AggregationStrategy; 4] = [
        AggregationStrategy::Average,
        AggregationStrategy::SoftmaxAverage,
        AggregationStrategy::TDError,
        AggregationStrategy::SoftmaxTDError,
    ];

    /// Softmax-normalize each critic's row before blending?
    pub fn normalize_q(self) -> bool {
        matches!(
            self,
            AggregationStrategy::SoftmaxAverage | AggregationStrategy::SoftmaxTDError
        )
    }

    /// Learn the blending weights from TD errors?
    pub fn learn_weights(self) -> bool {
        matches!(
            self,
            AggregationStrategy::TDError | AggregationStrategy::SoftmaxTDError
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregationStrategy::Average => "Average",
            AggregationStrategy::SoftmaxAverage => "SoftmaxAverage",
            AggregationStrategy::TDError => "TDError",
            AggregationStrategy::SoftmaxTDError => "SoftmaxTDError",
        }
    }
}

impl std::str::FromStr for AggregationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregationStrategy::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown aggregation strategy '{s}'")))
    }
}

/// Learnable ensemble weights: raw logits plus their softmax, kept in sync,
/// updated by Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleWeights {
    raw: Vec<f64>,
    normalized: Vec<f64>,
    opt: AdamState,
}

impl EnsembleWeights {
    /// Uniform initialization: zero logits.
    pub fn new(n: usize) -> Result<Self> {
        EnsembleWeights::from_raw(vec![0.0; n])
    }

    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::config("ensemble weights need at least one member"));
        }
        let normalized = softmax(&raw)?;
        let opt = AdamState::new(raw.len());
        Ok(EnsembleWeights { raw, normalized, opt })
    }

    pub fn n(&self) -> usize {
        self.raw.len()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// Strictly positive, sums to one.
    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    /// One Adam step on the logits descending
    /// `L = sum_i softmax(raw)_i * delta_sq[i]`, the weighted mean squared
    /// TD error with the deltas held constant. The analytic gradient
    /// `dL/draw_k = s_k (delta_sq[k] - L)` is evaluated in its pairwise form
    /// `s_k * sum_i s_i (delta_sq[k] - delta_sq[i])`, which is exactly zero
    /// when all deltas agree instead of leaking softmax rounding into Adam.
    /// Non-finite inputs leave all state untouched.
    pub fn apply_delta_squares(&mut self, delta_sq: &[f64], lr: f64) -> Result<()> {
        if delta_sq.len() != self.raw.len() {
            return Err(Error::config(format!(
                "got {} TD errors for {} weights",
                delta_sq.len(),
                self.raw.len()
            )));
        }
        if !delta_sq.iter().all(|d| d.is_finite()) {
            return Err(Error::numeric("non-finite TD error; weight update skipped"));
        }
        let s = &self.normalized;
        let grads: Vec<f64> = s
            .iter()
            .zip(delta_sq)
            .map(|(&sk, &dk)| {
                let excess: f64 = s.iter().zip(delta_sq).map(|(&si, &di)| si * (dk - di)).sum();
                sk * excess
            })
            .collect();
        self.opt.step_flat(&mut self.raw, &grads, lr)?;
        self.normalized.copy_from_slice(&self.raw);
        softmax_in_place(&mut self.normalized);
        Ok(())
    }
}

/// Behavior policy used while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// The ensemble itself (plus exploration noise) acts every step.
    Online,
    /// Members take turns: episode e is driven by member `e mod n` alone.
    Alternate,
}

/// Knobs of one training run. `seed` is the run seed from which all random
/// streams (exploration, sampling, initial buffer policy) are derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub mode: TrainingMode,
    pub episodes: usize,
    /// Adam rate for the ensemble weights.
    pub weight_lr: f64,
    /// Fresh shared minibatch size for each weight update.
    pub weight_batch: usize,
    /// Uniform-random environment steps taken to fill the buffer before any
    /// training.
    pub observation_steps: usize,
    pub replay_capacity: usize,
    pub config_id: String,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            mode: TrainingMode::Online,
            episodes: 0,
            weight_lr: 0.001,
            weight_batch: 64,
            observation_steps: 1000,
            replay_capacity: 1_000_000,
            config_id: String::new(),
            seed: 0,
        }
    }
}

/// Every member proposes; every critic scores every proposal.
pub fn build_q_matrix(agents: &[DdpgAgent], s: &[f64]) -> Result<QMatrix> {
    if agents.is_empty() {
        return Err(Error::config("ensemble needs at least one member"));
    }
    let obs_dim = agents[0].observation_dim();
    let action_dim = agents[0].action_dim();
    if agents
        .iter()
        .any(|a| a.observation_dim() != obs_dim || a.action_dim() != action_dim)
    {
        return Err(Error::config("ensemble members disagree on dimensions"));
    }
    let actions: Vec<Vec<f64>> = agents.iter().map(|a| a.act(s)).collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(agents.len() * agents.len());
    for critic_owner in agents {
        for action in &actions {
            values.push(critic_owner.critic_value(s, action)?);
        }
    }
    QMatrix::new(actions, values)
}

/// Softmax over each critic's row, making rows comparable across critics
/// with different value magnitudes. Actions pass through unchanged.
pub fn normalize_rows(m: &QMatrix) -> QMatrix {
    let mut out = m.clone();
    for i in 0..out.n {
        softmax_in_place(&mut out.values[i * out.n..(i + 1) * out.n]);
    }
    out
}

/// Blends critic rows into one score per proposed action:
/// `q_w = W^T M`, with `M` row-normalized and/or `W` learned according to
/// the strategy (uniform weights otherwise).
pub fn aggregate(m: &QMatrix, w: &EnsembleWeights, strategy: AggregationStrategy) -> Vec<f64> {
    let normalized_holder;
    let source = if strategy.normalize_q() {
        normalized_holder = normalize_rows(m);
        &normalized_holder
    } else {
        m
    };
    let n = m.n();
    let uniform = 1.0 / n as f64;
    let mut q_w = vec![0.0; n];
    for i in 0..n {
        let wi = if strategy.learn_weights() {
            w.normalized()[i]
        } else {
            uniform
        };
        for (acc, &q) in q_w.iter_mut().zip(source.row(i)) {
            *acc += wi * q;
        }
    }
    q_w
}

/// Picks the best-scoring proposal; ties go to the lowest index.
pub fn select_action(m: &QMatrix, q_w: &[f64]) -> Result<(Vec<f64>, usize)> {
    if q_w.len() != m.n() {
        return Err(Error::config("score vector length must equal member count"));
    }
    if !q_w.iter().all(|q| q.is_finite()) {
        return Err(Error::numeric("non-finite aggregated score"));
    }
    let mut best = 0;
    for j in 1..q_w.len() {
        if q_w[j] > q_w[best] {
            best = j;
        }
    }
    Ok((m.actions[best].clone(), best))
}

/// One weight update from a shared minibatch: per member, the mean squared
/// TD error under that member's own targets; then one Adam step on the
/// logits. The TD errors are treated as constants.
pub fn update_weights(
    w: &mut EnsembleWeights,
    agents: &[DdpgAgent],
    batch: &[&Transition],
    lr: f64,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::config("empty weight-update batch"));
    }
    if agents.len() != w.n() {
        return Err(Error::config("weight count must equal member count"));
    }
    let inv = 1.0 / batch.len() as f64;
    let mut delta_sq = vec![0.0; agents.len()];
    for t in batch {
        for (d, agent) in delta_sq.iter_mut().zip(agents) {
            let delta = agent.td_error(t)?;
            *d += delta * delta * inv;
        }
    }
    w.apply_delta_squares(&delta_sq, lr)
}

/// Full inference chain for one state: build, aggregate, select; optionally
/// perturb by OU noise and clip back to bounds.
pub fn ensemble_policy_step<R: Rng + ?Sized>(
    agents: &[DdpgAgent],
    w: &EnsembleWeights,
    strategy: AggregationStrategy,
    s: &[f64],
    noise: &mut OuNoise,
    rng: &mut R,
    explore: bool,
) -> Result<(Vec<f64>, usize)> {
    let m = build_q_matrix(agents, s)?;
    let q_w = aggregate(&m, w, strategy);
    let (mut action, index) = select_action(&m, &q_w)?;
    if explore {
        let eta = noise.step(rng);
        for ((a, &e), &b) in action
            .iter_mut()
            .zip(eta)
            .zip(agents[0].action_bounds())
        {
            *a = (*a + e).clamp(-b, b);
        }
    }
    Ok((action, index))
}

struct RunStreams {
    observation: ChaCha8Rng,
    noise: ChaCha8Rng,
    weights: ChaCha8Rng,
    members: Vec<ChaCha8Rng>,
}

impl RunStreams {
    fn derive(seed: u64, n: usize) -> Self {
        RunStreams {
            observation: rng::stream(seed, tag::OBSERVATION_POLICY),
            noise: rng::stream(seed, tag::EXPLORATION_NOISE),
            weights: rng::stream(seed, tag::WEIGHT_MINIBATCH),
            members: (0..n).map(|i| rng::stream(seed, tag::member_sample(i))).collect(),
        }
    }
}

/// Executes one full training run and records its statistics.
///
/// Protocol: an observation phase of uniform-random steps fills the shared
/// buffer; then each episode the behavior policy (the noisy ensemble in
/// online mode, the cycling noisy member in alternate mode) acts, every
/// member trains from the shared buffer every step, and weight-learning
/// strategies take one weight step per environment step on a fresh shared
/// minibatch. An environment or numeric fault inside the loops stops the
/// run early and returns the partial record flagged `aborted`.
pub fn run_training(
    agents: &mut [DdpgAgent],
    w: &mut EnsembleWeights,
    strategy: AggregationStrategy,
    env: &mut dyn Environment,
    opts: &TrainOptions,
) -> Result<RunRecord> {
    if agents.is_empty() {
        return Err(Error::config("ensemble needs at least one member"));
    }
    if w.n() != agents.len() {
        return Err(Error::config("weight count must equal member count"));
    }
    let spec = env.spec().clone();
    spec.validate()?;
    if agents.iter().any(|a| {
        a.observation_dim() != spec.observation_dim || a.action_dim() != spec.action_dim
    }) {
        return Err(Error::config("agents incompatible with environment dims"));
    }

    let mut record = RunRecord::new(opts.config_id.clone(), opts.seed);
    let mut streams = RunStreams::derive(opts.seed, agents.len());
    let mut buffer = ReplayBuffer::new(opts.replay_capacity)?;
    let mut noise = OuNoise::new(spec.action_dim);

    match run_loop(
        agents, w, strategy, env, opts, &spec, &mut record, &mut streams, &mut buffer, &mut noise,
    ) {
        Ok(()) => Ok(record),
        // A faulty environment or diverged ensemble ends the run, not the
        // whole experiment: hand back what was recorded.
        Err(Error::Env(_)) | Err(Error::Numeric(_)) => {
            record.aborted = true;
            Ok(record)
        }
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    agents: &mut [DdpgAgent],
    w: &mut EnsembleWeights,
    strategy: AggregationStrategy,
    env: &mut dyn Environment,
    opts: &TrainOptions,
    spec: &crate::envs::EnvSpec,
    record: &mut RunRecord,
    streams: &mut RunStreams,
    buffer: &mut ReplayBuffer,
    noise: &mut OuNoise,
) -> Result<()> {
    // Observation phase: uniform-random actions, no training.
    let mut obs = env.reset()?;
    for _ in 0..opts.observation_steps {
        let action: Vec<f64> = spec
            .action_bounds
            .iter()
            .map(|&b| streams.observation.random_range(-b..=b))
            .collect();
        let step = env.step(&action)?;
        buffer.push(Transition {
            state: std::mem::take(&mut obs),
            action,
            reward: step.reward,
            next_state: step.obs.clone(),
            terminal: step.terminal,
        });
        obs = if step.terminal || step.timeout {
            env.reset()?
        } else {
            step.obs
        };
    }

    let n = agents.len();
    for episode in 0..opts.episodes {
        let mut obs = env.reset()?;
        noise.reset();
        let mut cumulative = 0.0;
        let mut counts = vec![0u64; n];
        loop {
            let (action, index) = match opts.mode {
                TrainingMode::Online => ensemble_policy_step(
                    agents,
                    w,
                    strategy,
                    &obs,
                    noise,
                    &mut streams.noise,
                    true,
                )?,
                TrainingMode::Alternate => {
                    let k = episode % n;
                    let mut action = agents[k].act(&obs)?;
                    let eta = noise.step(&mut streams.noise);
                    for ((a, &e), &b) in
                        action.iter_mut().zip(eta).zip(&spec.action_bounds)
                    {
                        *a = (*a + e).clamp(-b, b);
                    }
                    (action, k)
                }
            };
            let step = env.step(&action)?;
            cumulative += step.reward;
            counts[index] += 1;
            buffer.push(Transition {
                state: std::mem::take(&mut obs),
                action,
                reward: step.reward,
                next_state: step.obs.clone(),
                terminal: step.terminal,
            });

            for (agent, member_rng) in agents.iter_mut().zip(&mut streams.members) {
                record.skipped_updates += agent.train_step(buffer, member_rng)? as u64;
            }
            if strategy.learn_weights() && buffer.len() >= opts.weight_batch {
                let batch = buffer.sample(opts.weight_batch, &mut streams.weights)?;
                match update_weights(w, agents, &batch, opts.weight_lr) {
                    Ok(()) => {}
                    Err(Error::Numeric(_)) => record.skipped_updates += 1,
                    Err(e) => return Err(e),
                }
            }

            if step.terminal || step.timeout {
                break;
            }
            obs = step.obs;
        }
        record.episode_rewards.push(cumulative);
        record.weight_trace.push(w.normalized().to_vec());
        record.action_counts.push(counts);
    }
    Ok(())
}
