//! Experiment orchestration: configuration, seeded multi-run execution and
//! CSV persistence of the measurements.

mod config;
mod experiments;
mod records;

pub use config::{default_seed, EnvKind, ExperimentConfig, ModelKind, ModelParams, SEED_ENV_VAR};
pub use experiments::{
    build_basis, embed, grpi_avg_steps, run_grpi, run_mse, run_smoothness, smoothness_pair, Environment, EMBED_STREAM,
    EVAL_STREAM, FIT_RIDGE, NO_MODEL, OPTIMAL_MODEL, SAMPLE_STREAM, VI_TOLERANCE,
};
pub use records::{format_value, read_csv, sort_records, write_csv, Metric, ResultRecord, CSV_HEADER};
