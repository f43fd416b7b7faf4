//! Performance statistics over training runs.
//!
//! Final performance is the mean cumulative reward over the last
//! [`FINAL_WINDOW`] episodes; uncertainty uses Student-t confidence
//! intervals; strategies are compared by the average relative regret, a sum
//! over (environment, group) cells of how far a strategy falls short of the
//! best one, normalized by the cell's best-to-worst span.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Episodes averaged by [`final_performance`].
pub const FINAL_WINDOW: usize = 20;

/// Everything recorded from one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_id: String,
    pub seed: u64,
    /// Cumulative raw reward per episode.
    pub episode_rewards: Vec<f64>,
    /// Normalized ensemble weights at the end of each episode (E x n).
    pub weight_trace: Vec<Vec<f64>>,
    /// How often each member's action drove behavior, per episode (E x n).
    pub action_counts: Vec<Vec<u64>>,
    /// True when the run stopped early on an environment or numeric fault.
    pub aborted: bool,
    /// Minibatch updates skipped for numeric reasons.
    pub skipped_updates: u64,
}

impl RunRecord {
    pub fn new(config_id: impl Into<String>, seed: u64) -> Self {
        RunRecord {
            config_id: config_id.into(),
            seed,
            episode_rewards: Vec::new(),
            weight_trace: Vec::new(),
            action_counts: Vec::new(),
            aborted: false,
            skipped_updates: 0,
        }
    }

    pub fn episodes(&self) -> usize {
        self.episode_rewards.len()
    }
}

/// Mean cumulative reward over the final window of episodes. Returns the
/// value and whether the window had to be truncated (fewer than
/// [`FINAL_WINDOW`] episodes available).
pub fn final_performance(r: &RunRecord) -> Result<(f64, bool)> {
    let e = r.episode_rewards.len();
    if e == 0 {
        return Err(Error::InsufficientData {
            have: 0,
            need: 1,
        });
    }
    let window = e.min(FINAL_WINDOW);
    let tail = &r.episode_rewards[e - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    Ok((mean, window < FINAL_WINDOW))
}

/// Two-sided Student-t confidence interval: returns `(mean, halfwidth)` at
/// the given level (e.g. 0.95).
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::UndefinedInterval(m));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("confidence level {level} outside (0,1)")));
    }
    let n = m as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::numeric(format!("t distribution: {e}")))?;
    let t = dist.inverse_cdf(1.0 - (1.0 - level) / 2.0);
    Ok((mean, t * sd / n.sqrt()))
}

/// Performance samples indexed by (environment, group, strategy, seed).
///
/// Regret works on per-cell means over seeds; the raw samples are kept so
/// the table can round-trip through its CSV form.
#[derive(Debug, Clone, Default)]
pub struct PerfTable {
    rows: BTreeMap<(String, String, String), BTreeMap<u64, f64>>,
}

impl PerfTable {
    pub fn new() -> Self {
        PerfTable::default()
    }

    pub fn push(
        &mut self,
        environment: impl Into<String>,
        group: impl Into<String>,
        strategy: impl Into<String>,
        seed: u64,
        performance: f64,
    ) {
        self.rows
            .entry((environment.into(), group.into(), strategy.into()))
            .or_default()
            .insert(seed, performance);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct (environment, group) cells, sorted.
    pub fn cells(&self) -> Vec<(String, String)> {
        self.rows
            .keys()
            .map(|(e, g, _)| (e.clone(), g.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Distinct strategies, sorted.
    pub fn strategies(&self) -> Vec<String> {
        self.rows
            .keys()
            .map(|(_, _, k)| k.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Mean performance over seeds for one cell and strategy.
    pub fn cell_mean(&self, environment: &str, group: &str, strategy: &str) -> Option<f64> {
        let samples = self.rows.get(&(
            environment.to_string(),
            group.to_string(),
            strategy.to_string(),
        ))?;
        if samples.is_empty() {
            return None;
        }
        Some(samples.values().sum::<f64>() / samples.len() as f64)
    }

    /// Average relative regret of `strategy`:
    /// `sum over (e,g) of |max_l p - p_k| / |max_l p - min_l p|`, where cells
    /// hold mean performance over seeds. Cells where all strategies tie
    /// contribute 0. Every (environment, group) cell must cover every
    /// strategy in the table.
    pub fn average_relative_regret(&self, strategy: &str) -> Result<f64> {
        let strategies = self.strategies();
        if !strategies.iter().any(|s| s == strategy) {
            return Err(Error::IncompleteTable(vec![format!(
                "strategy {strategy} absent from table"
            )]));
        }
        let mut missing = Vec::new();
        let mut total = 0.0;
        for (env, group) in self.cells() {
            let mut perfs = Vec::with_capacity(strategies.len());
            for k in &strategies {
                match self.cell_mean(&env, &group, k) {
                    Some(p) => perfs.push((k.clone(), p)),
                    None => missing.push(format!("{env}/{group}/{k}")),
                }
            }
            if !missing.is_empty() {
                continue;
            }
            let p_k = perfs.iter().find(|(k, _)| k == strategy).unwrap().1;
            let max = perfs.iter().map(|&(_, p)| p).fold(f64::NEG_INFINITY, f64::max);
            let min = perfs.iter().map(|&(_, p)| p).fold(f64::INFINITY, f64::min);
            if max > min {
                total += ((max - p_k) / (max - min)).abs();
            }
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteTable(missing));
        }
        Ok(total)
    }

    /// Regret of every strategy, sorted best (lowest) first.
    pub fn regret_ranking(&self) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        for k in self.strategies() {
            let regret = self.average_relative_regret(&k)?;
            out.push((k, regret));
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    /// CSV form: `environment,group,strategy,seed,performance`, rows sorted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("environment,group,strategy,seed,performance\n");
        for ((env, group, strategy), samples) in &self.rows {
            for (seed, perf) in samples {
                out.push_str(&format!("{env},{group},{strategy},{seed},{perf}\n"));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut table = PerfTable::new();
        let mut lines = text.lines();
        match lines.next() {
            Some("environment,group,strategy,seed,performance") => {}
            other => {
                return Err(Error::config(format!(
                    "bad performance table header: {other:?}"
                )))
            }
        }
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::config(format!(
                    "performance table line {}: expected 5 fields",
                    idx + 2
                )));
            }
            let seed: u64 = fields[3]
                .parse()
                .map_err(|e| Error::config(format!("line {}: bad seed: {e}", idx + 2)))?;
            let perf: f64 = fields[4]
                .parse()
                .map_err(|e| Error::config(format!("line {}: bad performance: {e}", idx + 2)))?;
            table.push(fields[0], fields[1], fields[2], seed, perf);
        }
        Ok(table)
    }
}
