//! Experiment orchestration.
//!
//! The harness turns a JSON experiment config into a full run matrix: it
//! resolves ensemble groups (named presets, explicit member lists, or
//! random draws from the supported domains), executes every
//! (strategy, seed) combination, and writes learning curves, weight and
//! action traces, summary statistics, regret tables, and SVG plots into an
//! output directory. Everything is deterministic in (config, base seed);
//! rerunning a resolved config reproduces every output byte.

mod config;
mod plot;
mod runner;
mod sample;
mod search;

pub use config::{ExperimentConfig, GroupPreset, GroupSpec};
pub use plot::{
    bar_chart_svg, emit_plots, learning_curve_svg, trace_svg, Bar, CurveSeries, TraceSeries,
};
pub use runner::{
    evaluate_matrix, run_dir, run_matrix, MatrixOutcome, MatrixSummary, RunFailure, RunOutcome,
    StrategySummary,
};
pub use sample::{
    sample_parameterization, ACTIVATIONS, LAYER_SIZES, LEARNING_RATES, MINIBATCH_SIZES,
    REPLAY_STEPS, TARGET_UPDATE_INTERVALS,
};
pub use search::{
    random_policy_performance, run_search, CandidateOutcome, CandidateSet, SearchConfig,
    SearchOutcome,
};
