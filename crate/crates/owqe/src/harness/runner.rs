//! Run-matrix execution and result files.
//!
//! A resolved config expands into one job per (strategy, run seed). Each
//! job trains a fresh ensemble, owns one run directory, and writes its
//! learning curve, weight trace, action counts, and full record there. The
//! matrix then aggregates final performance per strategy, computes the
//! regret table when several strategies were compared, and writes
//! `summary.json`, `performance.csv`, and `regret.json` next to the runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::DdpgAgent;
use crate::ensemble::{
    run_training, AggregationStrategy, EnsembleWeights, TrainOptions, TrainingMode,
};
use crate::envs::make_env;
use crate::harness::config::{ExperimentConfig, GroupSpec};
use crate::metrics::{confidence_interval, final_performance, PerfTable, RunRecord};
use crate::rng::tag;
use crate::{Error, Result};

/// Confidence level used for every interval in summaries and plots.
pub const CI_LEVEL: f64 = 0.95;

/// Outcome of a single training run, as recorded in `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    /// Mean cumulative reward over the final episode window; absent when
    /// the run produced no episodes.
    pub final_performance: Option<f64>,
    /// The final window held fewer episodes than usual.
    pub truncated: bool,
    /// The run stopped early on an environment or numeric fault.
    pub aborted: bool,
    pub episodes: usize,
    pub skipped_updates: u64,
}

/// Per-strategy aggregate over the completed runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategySummary {
    pub runs: Vec<RunOutcome>,
    /// Mean final performance over completed runs.
    pub mean: Option<f64>,
    /// Student-t halfwidth around `mean`; absent with fewer than two
    /// completed runs.
    pub ci_halfwidth: Option<f64>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub env: String,
    pub label: String,
    pub mode: TrainingMode,
    pub episodes: usize,
    pub runs: usize,
    pub seed: u64,
    pub members: usize,
    pub ci_level: f64,
    pub strategies: BTreeMap<String, StrategySummary>,
    /// Average relative regret per strategy; present when at least two
    /// strategies completed.
    pub regret: Option<BTreeMap<String, f64>>,
    /// Best final performance of any single run in the matrix.
    pub best_single_run: Option<f64>,
}

/// A run that failed or aborted; the matrix continues past these.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub strategy: String,
    pub run: usize,
    pub seed: u64,
    pub message: String,
}

/// Everything `run_matrix` produced.
#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub out_dir: PathBuf,
    pub resolved: ExperimentConfig,
    pub summary: MatrixSummary,
    pub failures: Vec<RunFailure>,
}

/// Directory owned by one run.
pub fn run_dir(out_dir: &Path, strategy: AggregationStrategy, run: usize) -> PathBuf {
    out_dir.join(strategy.name()).join(format!("run_{run:02}"))
}

/// Executes the full (strategy x seed) matrix of a config and writes every
/// result file under its output directory. Individual run failures are
/// recorded in the outcome and do not stop the matrix.
pub fn run_matrix(config: &ExperimentConfig, jobs: usize) -> Result<MatrixOutcome> {
    let resolved = config.resolve()?;
    let members = match &resolved.group {
        GroupSpec::Members(m) => m.clone(),
        _ => unreachable!("resolve() expands the group"),
    };
    let out_dir = resolved.out.clone().expect("resolve() fills the output dir");
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("resolved_config.json"), pretty_json(&resolved)?)?;

    let episodes = resolved.episodes.expect("resolve() fills episodes");
    let seeds = resolved.run_seeds();
    let jobs_list: Vec<(AggregationStrategy, usize, u64)> = resolved
        .strategies
        .iter()
        .flat_map(|&s| seeds.iter().enumerate().map(move |(k, &seed)| (s, k, seed)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let results: Vec<std::result::Result<RunRecord, String>> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(strategy, run, seed)| {
                execute_run(&resolved, &members, strategy, run, seed, episodes, &out_dir)
                    .map_err(|e| e.to_string())
            })
            .collect()
    });

    let records = jobs_list
        .iter()
        .zip(results)
        .map(|(&(strategy, run, seed), res)| (strategy, run, seed, res))
        .collect();
    let (summary, failures) = summarize(&resolved, records, &out_dir)?;
    Ok(MatrixOutcome {
        out_dir,
        resolved,
        summary,
        failures,
    })
}

/// Recomputes `summary.json`, `performance.csv`, and `regret.json` from the
/// records stored in an existing output directory.
pub fn evaluate_matrix(out_dir: &Path) -> Result<MatrixOutcome> {
    let resolved = ExperimentConfig::parse_file(&out_dir.join("resolved_config.json"))?;
    if resolved.episodes.is_none() || resolved.runs.is_none() || resolved.label.is_none() {
        return Err(Error::config("stored config is not resolved"));
    }
    let seeds = resolved.run_seeds();
    let mut records = Vec::new();
    for &strategy in &resolved.strategies {
        for (run, &seed) in seeds.iter().enumerate() {
            let path = run_dir(out_dir, strategy, run).join("record.json");
            let res = fs::read_to_string(&path)
                .map_err(|e| format!("{}: {e}", path.display()))
                .and_then(|text| {
                    serde_json::from_str::<RunRecord>(&text)
                        .map_err(|e| format!("{}: {e}", path.display()))
                });
            records.push((strategy, run, seed, res));
        }
    }
    let (summary, failures) = summarize(&resolved, records, out_dir)?;
    Ok(MatrixOutcome {
        out_dir: out_dir.to_path_buf(),
        resolved,
        summary,
        failures,
    })
}

/// Trains one (strategy, seed) cell and writes its run directory.
fn execute_run(
    resolved: &ExperimentConfig,
    members: &[crate::agent::HyperParams],
    strategy: AggregationStrategy,
    run: usize,
    seed: u64,
    episodes: usize,
    out_dir: &Path,
) -> Result<RunRecord> {
    let mut env = make_env(&resolved.env)?;
    let spec = env.spec().clone();
    let mut agents = members
        .iter()
        .enumerate()
        .map(|(i, hp)| {
            let mut init = crate::rng::stream(seed, tag::member_init(i));
            DdpgAgent::new(spec.observation_dim, &spec.action_bounds, hp.clone(), &mut init)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut weights = EnsembleWeights::new(agents.len())?;
    let opts = TrainOptions {
        mode: resolved.mode,
        episodes,
        config_id: format!(
            "{}/{}/{}/run_{run:02}",
            resolved.env,
            resolved.label.as_deref().unwrap_or("custom"),
            strategy.name()
        ),
        seed,
        ..TrainOptions::default()
    };
    let record = run_training(&mut agents, &mut weights, strategy, env.as_mut(), &opts)?;

    let dir = run_dir(out_dir, strategy, run);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("curves.csv"), curves_csv(&record))?;
    fs::write(dir.join("weights.csv"), weights_csv(&record))?;
    fs::write(dir.join("actions.csv"), actions_csv(&record))?;
    fs::write(dir.join("record.json"), pretty_json(&record)?)?;
    Ok(record)
}

/// Builds the matrix summary and failure list from per-run results, and
/// writes `summary.json`, `performance.csv`, and `regret.json`.
fn summarize(
    resolved: &ExperimentConfig,
    records: Vec<(AggregationStrategy, usize, u64, std::result::Result<RunRecord, String>)>,
    out_dir: &Path,
) -> Result<(MatrixSummary, Vec<RunFailure>)> {
    let episodes = resolved.episodes.expect("resolved");
    let label = resolved.label.clone().unwrap_or_else(|| resolved.group.label());
    let mut failures = Vec::new();
    let mut table = PerfTable::new();
    let mut best_single: Option<f64> = None;
    let mut outcomes: BTreeMap<String, Vec<RunOutcome>> = BTreeMap::new();

    for (strategy, run, seed, res) in records {
        match res {
            Ok(record) => {
                let (perf, truncated) = match final_performance(&record) {
                    Ok((value, truncated)) => (Some(value), truncated),
                    Err(_) => (None, false),
                };
                if record.aborted {
                    failures.push(RunFailure {
                        strategy: strategy.name().to_string(),
                        run,
                        seed,
                        message: format!(
                            "aborted after {} of {episodes} episodes",
                            record.episodes()
                        ),
                    });
                } else if let Some(p) = perf {
                    table.push(&resolved.env, &label, strategy.name(), seed, p);
                    best_single = Some(best_single.map_or(p, |b: f64| b.max(p)));
                }
                outcomes.entry(strategy.name().to_string()).or_default().push(RunOutcome {
                    run,
                    seed,
                    final_performance: perf,
                    truncated,
                    aborted: record.aborted,
                    episodes: record.episodes(),
                    skipped_updates: record.skipped_updates,
                });
            }
            Err(message) => {
                failures.push(RunFailure {
                    strategy: strategy.name().to_string(),
                    run,
                    seed,
                    message,
                });
                outcomes.entry(strategy.name().to_string()).or_default().push(RunOutcome {
                    run,
                    seed,
                    final_performance: None,
                    truncated: false,
                    aborted: true,
                    episodes: 0,
                    skipped_updates: 0,
                });
            }
        }
    }

    let mut strategies = BTreeMap::new();
    for (name, runs) in outcomes {
        let samples: Vec<f64> = runs
            .iter()
            .filter(|r| !r.aborted)
            .filter_map(|r| r.final_performance)
            .collect();
        let mean = if samples.is_empty() {
            None
        } else {
            Some(samples.iter().sum::<f64>() / samples.len() as f64)
        };
        let ci_halfwidth = confidence_interval(&samples, CI_LEVEL).ok().map(|(_, hw)| hw);
        strategies.insert(
            name,
            StrategySummary {
                runs,
                mean,
                ci_halfwidth,
            },
        );
    }

    let regret = if resolved.strategies.len() >= 2 {
        resolved
            .strategies
            .iter()
            .map(|s| {
                table
                    .average_relative_regret(s.name())
                    .map(|r| (s.name().to_string(), r))
            })
            .collect::<Result<BTreeMap<_, _>>>()
            .ok()
    } else {
        None
    };

    let summary = MatrixSummary {
        env: resolved.env.clone(),
        label,
        mode: resolved.mode,
        episodes,
        runs: resolved.runs.expect("resolved"),
        seed: resolved.seed,
        members: match &resolved.group {
            GroupSpec::Members(m) => m.len(),
            other => other.resolve_members()?.len(),
        },
        ci_level: CI_LEVEL,
        strategies,
        regret: regret.clone(),
        best_single_run: best_single,
    };

    fs::write(out_dir.join("summary.json"), pretty_json(&summary)?)?;
    fs::write(out_dir.join("performance.csv"), table.to_csv())?;
    if let Some(regret) = &regret {
        fs::write(out_dir.join("regret.json"), pretty_json(regret)?)?;
    }
    Ok((summary, failures))
}

pub(crate) fn pretty_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn curves_csv(record: &RunRecord) -> String {
    let mut out = String::from("episode,cumulative_reward\n");
    for (i, r) in record.episode_rewards.iter().enumerate() {
        let _ = writeln!(out, "{},{r}", i + 1);
    }
    out
}

fn weights_csv(record: &RunRecord) -> String {
    let n = record.weight_trace.first().map_or(0, Vec::len);
    let mut out = String::from("episode");
    for i in 1..=n {
        let _ = write!(out, ",w_{i}");
    }
    out.push('\n');
    for (e, row) in record.weight_trace.iter().enumerate() {
        let _ = write!(out, "{}", e + 1);
        for w in row {
            let _ = write!(out, ",{w}");
        }
        out.push('\n');
    }
    out
}

fn actions_csv(record: &RunRecord) -> String {
    let n = record.action_counts.first().map_or(0, Vec::len);
    let mut out = String::from("episode");
    for i in 1..=n {
        let _ = write!(out, ",count_{i}");
    }
    out.push('\n');
    for (e, row) in record.action_counts.iter().enumerate() {
        let _ = write!(out, "{}", e + 1);
        for c in row {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}
