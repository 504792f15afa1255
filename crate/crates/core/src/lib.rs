//! Exact simulation of the generalized contact process, its lattice
//! hydrodynamic equation, and a statistical harness comparing the two.

pub mod concentration;
pub mod entropy;
pub mod experiment;
pub mod error;
pub mod fields;
pub mod gcp;
pub mod hydro;
pub mod kernel;
pub mod lattice;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{DiscreteKernel, KernelSpec};
pub use lattice::TorusLattice;
