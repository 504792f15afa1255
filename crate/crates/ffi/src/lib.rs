//! C ABI over the simulator, the hydrodynamic solver and the experiment
//! runner.
//!
//! Objects cross the boundary as opaque pointers created by a `*_new`
//! function and released by the matching `*_free`. Every fallible function
//! returns a [`GcpStatus`]; on failure a message is kept per thread and can
//! be read with [`gcp_last_error`]. Panics never unwind into C: they are
//! caught and reported as [`GcpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use gcp_hydro::experiment::{self, ExperimentConfig};
use gcp_hydro::gcp::{Simulation, SpinConfig};
use gcp_hydro::hydro::{integrate, DensityField, ModelParams, Trajectory};
use gcp_hydro::rng::{replica_rng, ReplicaRng};
use gcp_hydro::{DiscreteKernel, Error, KernelSpec, TorusLattice};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericalError = 4,
    IoError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Continuous kernels available through the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcpKernelKind {
    /// `J = p1`.
    Constant = 0,
    /// `J = prod_j (1 + p1 cos(2 pi (x_j - y_j)))`.
    Cosine = 1,
    /// Periodic Gaussian bump of amplitude `p1` and width `p2`.
    Gaussian = 2,
}

/// Model parameters on a fixed lattice.
pub struct GcpModel {
    params: ModelParams,
}

/// Solution of the lattice hydrodynamic equation on a uniform time grid.
pub struct GcpTrajectory {
    inner: Trajectory,
}

/// A running particle system together with its random stream.
pub struct GcpSimulator {
    sim: Simulation,
    rng: ReplicaRng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(GcpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } => GcpStatus::ConfigError,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => GcpStatus::IoError,
            Error::NonFinite(_)
            | Error::StepSize(_)
            | Error::NegativeMass(_)
            | Error::SupportViolation { .. }
            | Error::VanishingComponent { .. } => GcpStatus::NumericalError,
            _ => GcpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GcpStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(GcpStatus::InvalidArgument, msg.into())
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GcpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            GcpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gcp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Builds a model with `k + 1` states on the `d`-dimensional torus of side `n`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gcp_model_new(
    d: usize,
    n: usize,
    k: usize,
    a: f64,
    kernel: GcpKernelKind,
    p1: f64,
    p2: f64,
    out: *mut *mut GcpModel,
) -> GcpStatus {
    guard(|| {
        let lattice = TorusLattice::new(d, n)?;
        let spec = match kernel {
            GcpKernelKind::Constant => KernelSpec::Constant { value: p1 },
            GcpKernelKind::Cosine => KernelSpec::Cosine { beta: p1 },
            GcpKernelKind::Gaussian => KernelSpec::GaussianBump {
                amplitude: p1,
                width: p2,
            },
        };
        let kernel = DiscreteKernel::discretize(&spec, lattice)?;
        let params = ModelParams::new(a, k, Arc::new(kernel))?;
        emit(out, GcpModel { params })
    })
}

/// # Safety
/// `model` must be null or a pointer returned by [`gcp_model_new`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn gcp_model_free(model: *mut GcpModel) {
    release(model)
}

/// Number of lattice sites, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn gcp_model_num_sites(model: *const GcpModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.lattice().num_sites())
}

/// Integrates the hydrodynamic equation from `u0` up to `t_end` with step
/// `h` (shrunk to land on `t_end`). `u0` holds `num_sites * (k + 1)` values,
/// site-major.
///
/// # Safety
/// `model` must be live, `u0` must point to `len` readable doubles and `out`
/// to storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gcp_hydro_integrate(
    model: *const GcpModel,
    u0: *const f64,
    len: usize,
    t_end: f64,
    h: f64,
    out: *mut *mut GcpTrajectory,
) -> GcpStatus {
    guard(|| {
        let p = &deref(model, "model")?.params;
        let values = slice(u0, len, "u0")?.to_vec();
        let u = DensityField::new(*p.lattice(), p.k(), values)?;
        let inner = integrate(&u, p, t_end, h)?;
        emit(out, GcpTrajectory { inner })
    })
}

/// # Safety
/// `traj` must be null or a live trajectory.
#[no_mangle]
pub unsafe extern "C" fn gcp_trajectory_free(traj: *mut GcpTrajectory) {
    release(traj)
}

/// Number of stored time points, or 0 for a null trajectory.
///
/// # Safety
/// `traj` must be null or a live trajectory.
#[no_mangle]
pub unsafe extern "C" fn gcp_trajectory_len(traj: *const GcpTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies the time and the state at grid index `idx`.
///
/// # Safety
/// `traj` must be live, `time` writable, and `buf` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gcp_trajectory_state(
    traj: *const GcpTrajectory,
    idx: usize,
    time: *mut f64,
    buf: *mut f64,
    len: usize,
) -> GcpStatus {
    guard(|| {
        let t = &deref(traj, "traj")?.inner;
        if idx >= t.len() {
            return Err(invalid(format!("index {idx} out of range for {} time points", t.len())));
        }
        let values = t.values(idx);
        if len < values.len() {
            return Err(Failure(
                GcpStatus::BufferTooSmall,
                format!("buffer holds {len} values, state needs {}", values.len()),
            ));
        }
        slice_mut(buf, len, "buf")?[..values.len()].copy_from_slice(values);
        *deref_mut(time, "time")? = t.times()[idx];
        Ok(())
    })
}

/// Starts a simulation from the given spins. The random stream is the one
/// a replica with index `replica` gets under master seed `seed`.
///
/// # Safety
/// `model` must be live, `states` must point to `len` readable bytes and
/// `out` to storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gcp_simulator_new(
    model: *const GcpModel,
    states: *const u8,
    len: usize,
    seed: u64,
    replica: u64,
    out: *mut *mut GcpSimulator,
) -> GcpStatus {
    guard(|| {
        let p = &deref(model, "model")?.params;
        let states = slice(states, len, "states")?.to_vec();
        let config = SpinConfig::new(*p.lattice(), p.k(), states)?;
        let sim = Simulation::new(config, p.clone())?;
        emit(
            out,
            GcpSimulator {
                sim,
                rng: replica_rng(seed, replica),
            },
        )
    })
}

/// # Safety
/// `sim` must be null or a live simulator.
#[no_mangle]
pub unsafe extern "C" fn gcp_simulator_free(sim: *mut GcpSimulator) {
    release(sim)
}

/// Runs the dynamics up to time `t`, which must not precede the current time.
///
/// # Safety
/// `sim` must be live.
#[no_mangle]
pub unsafe extern "C" fn gcp_simulator_advance(sim: *mut GcpSimulator, t: f64) -> GcpStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        s.sim.advance_to(t, &mut s.rng)?;
        Ok(())
    })
}

/// Current simulation time, or NaN for a null simulator.
///
/// # Safety
/// `sim` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn gcp_simulator_time(sim: *const GcpSimulator) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.sim.time())
}

/// Number of events fired so far, or 0 for a null simulator.
///
/// # Safety
/// `sim` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn gcp_simulator_events(sim: *const GcpSimulator) -> u64 {
    sim.as_ref().map_or(0, |s| s.sim.events())
}

/// Copies the current spins into `buf` (`num_sites` bytes).
///
/// # Safety
/// `sim` must be live and `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gcp_simulator_states(sim: *const GcpSimulator, buf: *mut u8, len: usize) -> GcpStatus {
    guard(|| {
        let states = deref(sim, "sim")?.sim.config().states();
        if len < states.len() {
            return Err(Failure(
                GcpStatus::BufferTooSmall,
                format!("buffer holds {len} spins, lattice has {}", states.len()),
            ));
        }
        slice_mut(buf, len, "buf")?[..states.len()].copy_from_slice(states);
        Ok(())
    })
}

/// Runs an experiment described by a TOML document and writes its outputs
/// to `out_dir` (or the directory named in the config when `out_dir` is
/// null). `passed` receives whether every check passed.
///
/// # Safety
/// `config_toml` must be a nul-terminated string, `out_dir` null or
/// nul-terminated, and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn gcp_run_experiment(
    config_toml: *const c_char,
    out_dir: *const c_char,
    passed: *mut bool,
) -> GcpStatus {
    guard(|| {
        let text = string(config_toml, "config_toml")?;
        let mut cfg = ExperimentConfig::from_toml_str(&text)?;
        if !out_dir.is_null() {
            cfg.out_dir = PathBuf::from(string(out_dir, "out_dir")?);
        }
        let passed = deref_mut(passed, "passed")?;
        let started = std::time::Instant::now();
        let outcome = experiment::run(&cfg)?;
        experiment::write_outcome(&outcome, &cfg, &cfg.out_dir, started.elapsed().as_secs_f64())?;
        *passed = outcome.pass();
        Ok(())
    })
}
