//! Configuration-driven Monte-Carlo experiments.

mod bound;
mod config;
mod output;
mod run;
mod summary;

pub use self::bound::{bound_query, BoundQuery};
pub use self::config::{
    BoundKind, ConfigFile, EstimatorKind, ExperimentConfig, LambdaMode, LassoConfig, Preset,
};
pub use self::output::{emit_csv, fmt_sig6, gnuplot_script, read_csv, read_csv_from, write_csv, CSV_HEADER};
pub use self::run::{mean_and_stderr, run_experiment, sort_records, splitmix64, trial_seed, ResultRecord};
pub use self::summary::{summarize, CONVERGENCE_DB};
