use std::sync::Arc;

use rayon::prelude::*;

use super::model::{check_compatible, drift_into, DensityField, ModelParams, SIMPLEX_TOL};
use super::profile::InitialProfile;
use crate::error::{Error, Result};
use crate::kernel::{DiscreteKernel, KernelSpec};
use crate::lattice::TorusLattice;
use crate::stats::{rate_fit, RateFit};

/// Slack applied to the analytic positivity floor to absorb integrator error.
pub const FLOOR_SLACK: f64 = 0.9;

/// Solution of the lattice hydrodynamic equation on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    lattice: TorusLattice,
    k: usize,
    step: f64,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    repairs: usize,
}

impl Trajectory {
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of times a per-site sum drifted past tolerance and was renormalised.
    pub fn repairs(&self) -> usize {
        self.repairs
    }

    pub fn values(&self, idx: usize) -> &[f64] {
        &self.states[idx]
    }

    pub fn state(&self, idx: usize) -> DensityField {
        DensityField::new_unchecked(self.lattice, self.k, self.states[idx].clone())
            .expect("shape fixed at construction")
    }

    pub fn final_state(&self) -> DensityField {
        self.state(self.len() - 1)
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if self.step == 0.0 {
            return (t == 0.0).then_some(0);
        }
        let idx = (t / self.step).round();
        if idx < 0.0 || idx as usize >= self.len() {
            return None;
        }
        let idx = idx as usize;
        ((self.times[idx] - t).abs() <= 1e-9 * self.step.max(1.0)).then_some(idx)
    }

    /// State at grid time `t`.
    pub fn at(&self, t: f64) -> Result<DensityField> {
        self.index_of(t)
            .map(|i| self.state(i))
            .ok_or_else(|| Error::GridMismatch(format!("t = {t} is not on the trajectory grid")))
    }

    /// Restriction to the grid points in `[0, t]`.
    pub fn truncate(&self, t: f64) -> Result<Trajectory> {
        let idx = self
            .index_of(t)
            .ok_or_else(|| Error::GridMismatch(format!("t = {t} is not on the trajectory grid")))?;
        Ok(Trajectory {
            lattice: self.lattice,
            k: self.k,
            step: self.step,
            times: self.times[..=idx].to_vec(),
            states: self.states[..=idx].to_vec(),
            repairs: self.repairs,
        })
    }

    /// Rows `(t, site, u^0..u^k)` for CSV export.
    pub fn rows(&self) -> impl Iterator<Item = (f64, usize, &[f64])> + '_ {
        let q = self.k + 1;
        self.times.iter().zip(&self.states).flat_map(move |(t, s)| {
            s.chunks_exact(q)
                .enumerate()
                .map(move |(x, site)| (*t, x, site))
        })
    }
}

/// Number of steps and effective step size for reaching `t_end` with step `h`.
pub fn time_grid(t_end: f64, h: f64) -> Result<(usize, f64)> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::param("h", format!("step must be > 0, got {h}")));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::param("t_end", format!("must be >= 0, got {t_end}")));
    }
    if t_end == 0.0 {
        return Ok((0, h));
    }
    let steps = (t_end / h - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_end / steps as f64))
}

/// Classical RK4 on the grid `{0, h, ..., t_end}` (the step is shrunk so the
/// grid ends exactly at `t_end`).
pub fn integrate(u0: &DensityField, p: &ModelParams, t_end: f64, h: f64) -> Result<Trajectory> {
    check_compatible(u0, p)?;
    u0.check_simplex()?;
    let floor0 = u0.min_component();
    if floor0 <= 0.0 {
        return Err(Error::param(
            "u0",
            "initial profile must be strictly positive in every component",
        ));
    }
    let (steps, h) = time_grid(t_end, h)?;
    let q = p.states();
    let len = u0.values().len();
    let floor_rate = p.floor_rate();

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(u0.values().to_vec());

    let (mut sk, mut sc) = (Vec::new(), Vec::new());
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut cur = u0.values().to_vec();
    let mut repairs = 0;

    for step in 1..=steps {
        drift_into(&cur, p, &mut sk, &mut sc, &mut k1)?;
        axpy(&cur, 0.5 * h, &k1, &mut tmp);
        drift_into(&tmp, p, &mut sk, &mut sc, &mut k2)?;
        axpy(&cur, 0.5 * h, &k2, &mut tmp);
        drift_into(&tmp, p, &mut sk, &mut sc, &mut k3)?;
        axpy(&cur, h, &k3, &mut tmp);
        drift_into(&tmp, p, &mut sk, &mut sc, &mut k4)?;
        for i in 0..len {
            cur[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hydrodynamic state"));
        }
        for site in cur.chunks_exact_mut(q) {
            let s: f64 = site.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                site.iter_mut().for_each(|v| *v /= s);
                repairs += 1;
            }
        }
        let t = step as f64 * h;
        let floor = FLOOR_SLACK * floor0 * (-floor_rate * t).exp();
        let min = cur.iter().copied().fold(f64::INFINITY, f64::min);
        if min < floor {
            return Err(Error::StepSize(format!(
                "component {min} fell below the positivity floor {floor} at t = {t} with h = {h}"
            )));
        }
        times.push(t);
        states.push(cur.clone());
    }

    Ok(Trajectory {
        lattice: *u0.lattice(),
        k: u0.k(),
        step: h,
        times,
        states,
        repairs,
    })
}

fn axpy(x: &[f64], alpha: f64, y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = a + alpha * b;
    }
}

/// Model on a given lattice built from a kernel description.
pub fn model_on(spec: &KernelSpec, lattice: TorusLattice, a: f64, k: usize) -> Result<ModelParams> {
    let kernel = DiscreteKernel::discretize(spec, lattice)?;
    ModelParams::new(a, k, Arc::new(kernel))
}

/// Fine-lattice solution standing in for the continuum equation.
pub fn reference_continuum(
    profile: &InitialProfile,
    spec: &KernelSpec,
    a: f64,
    dim: usize,
    n_ref: usize,
    t_end: f64,
    h: Option<f64>,
) -> Result<DensityField> {
    let lattice = TorusLattice::new(dim, n_ref)?;
    let k = profile.states().saturating_sub(1);
    let p = model_on(spec, lattice, a, k)?;
    let u0 = profile.on_lattice(lattice)?;
    let h = h.unwrap_or_else(|| p.default_step());
    Ok(integrate(&u0, &p, t_end, h)?.final_state())
}

/// Inputs of a discretisation-convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub dim: usize,
    pub a: f64,
    pub kernel: KernelSpec,
    pub profile: InitialProfile,
    pub n_list: Vec<usize>,
    pub n_ref: usize,
    pub t: f64,
    /// Common RK4 step; defaults to the reference lattice's default step.
    pub step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub n_ref: usize,
    pub step: f64,
    /// `(n, sup-norm error against the reference)`.
    pub rows: Vec<(usize, f64)>,
    /// `None` when some error is exactly zero.
    pub fit: Option<RateFit>,
}

/// Sup-norm error of each lattice solution against the reference at matched
/// points, and the log-log slope of error against `n`.
pub fn convergence_study(setup: &ConvergenceSetup) -> Result<ConvergenceTable> {
    if setup.n_list.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "convergence study needs at least 3 lattice sizes, got {}",
            setup.n_list.len()
        )));
    }
    if let Some(bad) = setup
        .n_list
        .iter()
        .find(|&&n| n < 2 || setup.n_ref % n != 0)
    {
        return Err(Error::param(
            "n_list",
            format!("{bad} does not divide the reference size {}", setup.n_ref),
        ));
    }
    let k = setup.profile.states().saturating_sub(1);
    let ref_lattice = TorusLattice::new(setup.dim, setup.n_ref)?;
    let ref_params = model_on(&setup.kernel, ref_lattice, setup.a, k)?;
    let step = setup.step.unwrap_or_else(|| ref_params.default_step());
    let reference = integrate(
        &setup.profile.on_lattice(ref_lattice)?,
        &ref_params,
        setup.t,
        step,
    )?
    .final_state();

    let rows = setup
        .n_list
        .par_iter()
        .map(|&n| {
            let lattice = TorusLattice::new(setup.dim, n)?;
            let p = model_on(&setup.kernel, lattice, setup.a, k)?;
            let u = integrate(&setup.profile.on_lattice(lattice)?, &p, setup.t, step)?
                .final_state();
            let err = u.sup_distance(&reference.restrict(lattice)?)?;
            Ok((n, err))
        })
        .collect::<Result<Vec<_>>>()?;

    let fit = if rows.iter().all(|(_, e)| *e > 0.0) {
        let pairs: Vec<(f64, f64)> = rows.iter().map(|&(n, e)| (n as f64, e)).collect();
        Some(rate_fit(&pairs)?)
    } else {
        None
    };
    Ok(ConvergenceTable {
        n_ref: setup.n_ref,
        step,
        rows,
        fit,
    })
}
