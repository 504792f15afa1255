//! Named experiments: configuration, execution and CSV/JSON output.

mod config;
mod output;
mod runner;

pub use config::{ExperimentConfig, ExperimentKind, KernelConfig, Violation, ENV_SEED, ENV_WORKERS};
pub use output::{config_hash, melt, num, write_atomic, write_outcome, Check, Outcome, Table, CSV_SCHEMA_VERSION};
pub use runner::{
    run, CROSSVAL_SIDE, EXACT_TOL, F_ORACLE_PROFILES, HYDRO_SLOPE, LLN_SLOPE, MAX_ABS_EXCESS_KURTOSIS, MAX_ABS_SKEW,
    SE_TOLERANCE,
};
