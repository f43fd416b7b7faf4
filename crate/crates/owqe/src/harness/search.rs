//! Reproducible single-agent pre-search.
//!
//! Ranks candidate parameterizations by training each one alone (a
//! one-member ensemble) over a few seeds, next to a uniform-random-policy
//! baseline rolled out for the same number of episodes. The bundled preset
//! groups were curated from exactly this search over the bundled search
//! configs, so the ranking is reproducible from the repository alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{DdpgAgent, HyperParams};
use crate::ensemble::{
    run_training, AggregationStrategy, EnsembleWeights, TrainOptions, TrainingMode,
};
use crate::envs::make_env;
use crate::harness::runner::pretty_json;
use crate::harness::sample::sample_parameterization;
use crate::metrics::{final_performance, RunRecord};
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Candidate parameterizations of a search: an explicit grid or random
/// draws from the supported domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateSet {
    Explicit(Vec<HyperParams>),
    Random { count: usize, seed: u64 },
}

/// One search: an environment, candidates, and the evaluation shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub env: String,
    pub episodes: usize,
    /// Seeds per candidate.
    pub runs: usize,
    /// Base seed; per-run seeds are derived from it exactly as in
    /// experiment configs.
    pub seed: u64,
    pub candidates: CandidateSet,
    /// Output directory; defaults to `runs/search_<env>_s<seed>`.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SearchConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let config: SearchConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.is_empty() {
            return Err(Error::config("field `env` must name an environment"));
        }
        if self.episodes == 0 || self.runs == 0 {
            return Err(Error::config("`episodes` and `runs` must be at least 1"));
        }
        for (i, hp) in self.resolve_candidates()?.iter().enumerate() {
            hp.validate()
                .map_err(|e| Error::config(format!("candidate {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn resolve_candidates(&self) -> Result<Vec<HyperParams>> {
        let candidates = match &self.candidates {
            CandidateSet::Explicit(list) => list.clone(),
            CandidateSet::Random { count, seed } => {
                let mut rng = rng::stream(*seed, tag::PARAM_SAMPLE);
                (0..*count).map(|_| sample_parameterization(&mut rng)).collect()
            }
        };
        if candidates.is_empty() {
            return Err(Error::config("search needs at least one candidate"));
        }
        Ok(candidates)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/search_{}_s{}", self.env, self.seed)))
    }
}

/// Per-candidate search result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateOutcome {
    /// Position in the candidate list of the config.
    pub candidate: usize,
    pub params: HyperParams,
    /// Final performance per seed; absent entries aborted.
    pub per_seed: Vec<Option<f64>>,
    /// Mean over completed seeds; absent when all aborted.
    pub mean: Option<f64>,
}

/// Contents of `search_summary.json`: candidates ranked best first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub env: String,
    pub episodes: usize,
    pub runs: usize,
    pub seed: u64,
    /// Uniform-random-policy performance per seed and its mean.
    pub baseline_per_seed: Vec<f64>,
    pub baseline_mean: f64,
    pub ranked: Vec<CandidateOutcome>,
}

impl SearchOutcome {
    /// The best-ranked candidate that completed at least one seed.
    pub fn best(&self) -> Option<&CandidateOutcome> {
        self.ranked.iter().find(|c| c.mean.is_some())
    }
}

/// Rolls out a uniform-random policy and returns its final performance
/// over the usual window.
pub fn random_policy_performance(env_id: &str, episodes: usize, seed: u64) -> Result<f64> {
    let mut env = make_env(env_id)?;
    let bounds = env.spec().action_bounds.clone();
    let mut rng = rng::stream(seed, tag::OBSERVATION_POLICY);
    let mut record = RunRecord::new(format!("{env_id}/random-policy"), seed);
    for _ in 0..episodes {
        env.reset()?;
        let mut cumulative = 0.0;
        loop {
            let action: Vec<f64> = bounds
                .iter()
                .map(|&b| rand::Rng::random_range(&mut rng, -b..=b))
                .collect();
            let step = env.step(&action)?;
            cumulative += step.reward;
            if step.terminal || step.timeout {
                break;
            }
        }
        record.episode_rewards.push(cumulative);
    }
    final_performance(&record).map(|(value, _)| value)
}

/// Runs the search and writes `search_summary.json` into its output
/// directory. Candidate/seed cells that abort are recorded as absent and
/// do not stop the search.
pub fn run_search(config: &SearchConfig, jobs: usize) -> Result<SearchOutcome> {
    config.validate()?;
    let candidates = config.resolve_candidates()?;
    let seeds: Vec<u64> = (0..config.runs).map(|k| rng::run_seed(config.seed, k)).collect();

    let mut cells: Vec<(usize, u64)> = Vec::new();
    for c in 0..candidates.len() {
        for &seed in &seeds {
            cells.push((c, seed));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let results: Vec<Option<f64>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(c, seed)| single_agent_performance(config, &candidates[c], seed).ok().flatten())
            .collect()
    });

    let mut per_candidate: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (&(c, _), perf) in cells.iter().zip(results) {
        per_candidate.entry(c).or_default().push(perf);
    }

    let mut ranked: Vec<CandidateOutcome> = per_candidate
        .into_iter()
        .map(|(candidate, per_seed)| {
            let done: Vec<f64> = per_seed.iter().flatten().cloned().collect();
            let mean = if done.is_empty() {
                None
            } else {
                Some(done.iter().sum::<f64>() / done.len() as f64)
            };
            CandidateOutcome {
                candidate,
                params: candidates[candidate].clone(),
                per_seed,
                mean,
            }
        })
        .collect();
    // Best first; candidates that never completed sink to the bottom.
    ranked.sort_by(|a, b| match (a.mean, b.mean) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.candidate.cmp(&b.candidate),
    });

    let baseline_per_seed: Vec<f64> = seeds
        .iter()
        .map(|&seed| random_policy_performance(&config.env, config.episodes, seed))
        .collect::<Result<_>>()?;
    let baseline_mean = baseline_per_seed.iter().sum::<f64>() / baseline_per_seed.len() as f64;

    let outcome = SearchOutcome {
        env: config.env.clone(),
        episodes: config.episodes,
        runs: config.runs,
        seed: config.seed,
        baseline_per_seed,
        baseline_mean,
        ranked,
    };

    let out_dir = config.out_dir();
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("search_summary.json"), pretty_json(&outcome)?)?;
    Ok(outcome)
}

/// Trains one candidate alone and returns its final performance, or `None`
/// when the run aborted.
fn single_agent_performance(
    config: &SearchConfig,
    hp: &HyperParams,
    seed: u64,
) -> Result<Option<f64>> {
    let mut env = make_env(&config.env)?;
    let spec = env.spec().clone();
    let mut init = rng::stream(seed, tag::member_init(0));
    let mut agents = vec![DdpgAgent::new(
        spec.observation_dim,
        &spec.action_bounds,
        hp.clone(),
        &mut init,
    )?];
    let mut weights = EnsembleWeights::new(1)?;
    let opts = TrainOptions {
        mode: TrainingMode::Online,
        episodes: config.episodes,
        config_id: format!("{}/search", config.env),
        seed,
        ..TrainOptions::default()
    };
    let record = run_training(
        &mut agents,
        &mut weights,
        AggregationStrategy::Average,
        env.as_mut(),
        &opts,
    )?;
    if record.aborted {
        return Ok(None);
    }
    Ok(Some(final_performance(&record)?.0))
}
