//! Lattice hydrodynamic equation: drift, RK4 integration, the fine-lattice
//! continuum reference, convergence studies and the backward equation for
//! test functions.

mod backward;
mod integrate;
mod model;
mod profile;

pub use backward::{backward_fp, BackwardTestField};
pub use integrate::{
    convergence_study, integrate, model_on, reference_continuum, time_grid, ConvergenceSetup,
    ConvergenceTable, Trajectory, FLOOR_SLACK,
};
pub use model::{drift, DensityField, MatrixAM, ModelParams, SIMPLEX_TOL};
pub use profile::InitialProfile;
