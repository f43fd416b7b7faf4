//! Command-line front end for the ensemble experiment harness.
//!
//! Exit codes: 0 on success, 1 when the matrix completed but at least one
//! run failed or aborted, 2 on configuration or usage errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use owqe::envs::{make_env, serve_env};
use owqe::harness::{
    emit_plots, evaluate_matrix, run_matrix, run_search, sample_parameterization,
    ExperimentConfig, MatrixOutcome, SearchConfig,
};
use owqe::metrics::PerfTable;
use owqe::rng::{stream, tag};
use owqe::{Error, Result};

#[derive(Parser)]
#[command(
    name = "owqe",
    version,
    about = "Train and evaluate weighted Q-ensembles of DDPG agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Run the full (strategy x seed) matrix of an experiment config.
    Train {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed (takes precedence over OWQE_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent runs.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Render SVG plots once the matrix finishes.
        #[arg(long)]
        plots: bool,
    },
    /// Recompute summary.json, performance.csv, and regret.json from the
    /// records in an existing output directory.
    Evaluate {
        /// Output directory of a previous `train`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge performance tables and rank strategies by average relative
    /// regret.
    Regret {
        /// performance.csv files; pass one per matrix to combine.
        #[arg(long = "table", required = true)]
        tables: Vec<PathBuf>,
        /// Write the ranking as JSON here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw random parameterizations from the supported domains.
    SampleParams {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Render SVG plots for an existing output directory.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank single-agent candidates from a search config against a
    /// random-policy baseline.
    Search {
        /// Search config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed (takes precedence over OWQE_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Serve a built-in environment over stdin/stdout in the line-delimited
    /// JSON protocol.
    ServeEnv {
        /// Environment id, e.g. `pendulum` or `cartpole`.
        #[arg(long)]
        env: String,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `--seed` flag, then `OWQE_SEED`, then the config's own seed.
fn seed_override(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("OWQE_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map(Some)
            .map_err(|e| Error::config(format!("OWQE_SEED `{text}`: {e}"))),
        Err(_) => Ok(None),
    }
}

fn report_matrix(outcome: &MatrixOutcome) -> ExitCode {
    println!("results in {}", outcome.out_dir.display());
    for (name, s) in &outcome.summary.strategies {
        let mean = s.mean.map_or("n/a".to_string(), |m| format!("{m:.3}"));
        let ci = s.ci_halfwidth.map_or(String::new(), |hw| format!(" \u{00b1}{hw:.3}"));
        println!("  {name:<16} final performance {mean}{ci} over {} runs", s.runs.len());
    }
    if let Some(regret) = &outcome.summary.regret {
        let mut ranked: Vec<_> = regret.iter().collect();
        ranked.sort_by(|a, b| a.1.total_cmp(b.1));
        let line: Vec<String> = ranked.iter().map(|(n, r)| format!("{n} {r:.4}")).collect();
        println!("  regret: {}", line.join(", "));
    }
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("run failed: {} run {} (seed {}): {}", f.strategy, f.run, f.seed, f.message);
        }
        ExitCode::from(1)
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train {
            config,
            seed,
            out,
            jobs,
            plots,
        } => {
            let mut config = ExperimentConfig::parse_file(&config)?;
            if let Some(seed) = seed_override(seed)? {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.out = Some(out);
            }
            let outcome = run_matrix(&config, jobs)?;
            let code = report_matrix(&outcome);
            if plots {
                for path in emit_plots(&outcome.out_dir)? {
                    println!("  plot {}", path.display());
                }
            }
            Ok(code)
        }
        Command::Evaluate { out } => {
            let outcome = evaluate_matrix(&out)?;
            Ok(report_matrix(&outcome))
        }
        Command::Regret { tables, out } => {
            let mut combined = String::new();
            for (i, path) in tables.iter().enumerate() {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
                let mut lines = text.lines();
                let header = lines
                    .next()
                    .ok_or_else(|| Error::config(format!("{} is empty", path.display())))?;
                if i == 0 {
                    combined.push_str(header);
                    combined.push('\n');
                }
                for line in lines {
                    combined.push_str(line);
                    combined.push('\n');
                }
            }
            let table = PerfTable::from_csv(&combined)?;
            let ranking = table.regret_ranking()?;

            #[derive(Serialize)]
            struct Entry {
                strategy: String,
                regret: f64,
            }
            let entries: Vec<Entry> = ranking
                .into_iter()
                .map(|(strategy, regret)| Entry { strategy, regret })
                .collect();
            for (i, e) in entries.iter().enumerate() {
                println!("{}. {:<16} {:.4}", i + 1, e.strategy, e.regret);
            }
            if let Some(path) = out {
                fs::write(&path, serde_json::to_string_pretty(&entries)? + "\n")?;
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SampleParams { seed, count } => {
            let mut rng = stream(seed, tag::PARAM_SAMPLE);
            let params: Vec<_> = (0..count).map(|_| sample_parameterization(&mut rng)).collect();
            println!("{}", serde_json::to_string_pretty(&params)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { out } => {
            for path in emit_plots(&out)? {
                println!("  plot {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Search {
            config,
            seed,
            out,
            jobs,
        } => {
            let mut config = SearchConfig::parse_file(&config)?;
            if let Some(seed) = seed_override(seed)? {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.out = Some(out);
            }
            let outcome = run_search(&config, jobs)?;
            println!("results in {}", config.out_dir().display());
            println!(
                "  random-policy baseline: {:.3} over {} seeds",
                outcome.baseline_mean, outcome.runs
            );
            for (rank, c) in outcome.ranked.iter().enumerate() {
                let mean = c.mean.map_or("aborted".to_string(), |m| format!("{m:.3}"));
                let hp = &c.params;
                println!(
                    "  {:>2}. candidate {:<2} {mean:<12} layer {:<3} {:<7} lr {:<6} interval {:<3} replay {:<3} minibatch {}",
                    rank + 1,
                    c.candidate,
                    hp.layer_size,
                    format!("{:?}", hp.activation).to_lowercase(),
                    hp.learning_rate,
                    hp.target_update_interval,
                    hp.replay_steps,
                    hp.minibatch_size,
                );
            }
            let incomplete = outcome.ranked.iter().any(|c| c.per_seed.iter().any(Option::is_none));
            Ok(if incomplete { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::ServeEnv { env } => {
            let mut env = make_env(&env)?;
            serve_env(env.as_mut(), std::io::stdin().lock(), std::io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
