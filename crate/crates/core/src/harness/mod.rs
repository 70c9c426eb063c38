//! Experiment orchestration, configuration, and result files.

mod config;
mod results;
mod run;

pub use config::{DenoiseSpec, ExperimentKind, RunConfig};
pub use results::{
    aggregate, format_aggregate, format_results, mean_stderr, parse_aggregate, parse_results, sort_records,
    verify_aggregate, AggregateRow, Method, MetricsRecord, AGGREGATE_HEADER, RESULTS_HEADER,
};
pub use run::{
    denoise_file, format_diagnostics, format_failures, format_transitions, mean_metric, run_covariance_experiment,
    run_markov_experiment, write_outputs, DenoiseOutput, ExperimentOutput, FailureRecord, TraceRecord,
    TransitionRecord, FAILURES_HEADER, MAX_FAILURE_FRACTION, TRANSITION_HEADER,
};
