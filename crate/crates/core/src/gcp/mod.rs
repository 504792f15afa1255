//! Exact simulation of the generalized contact process.
//!
//! Each site carries a state in `0..=k`. A site in state `k` is active and
//! returns to `0` at rate `a`; a passive site in state `i` moves to `i + 1`
//! at rate `(J^n * 1(sigma = k))_x`.

mod config;
mod fenwick;
mod sim;

pub use config::{sample_initial, SpinConfig};
pub use fenwick::Fenwick;
pub use sim::{
    EngineKind, RateState, Simulation, Snapshot, SnapshotMode, StepOutcome, REBUILD_PERIOD,
};
