//! Backward evolution of vector test functions along a hydrodynamic trajectory.
//!
//! Solves
//! `d/ds g_s + A^T g_s + (J^n * u^k_s) M^T g_s + (J^{n,*} * <g_s, M u_s>) e_k = 0`
//! from the terminal datum `g_t = f` back to `s = 0`. The forward state at RK4
//! half steps is reconstructed by cubic Hermite interpolation from the grid
//! values and their drifts, which keeps the scheme fourth order.

use super::integrate::Trajectory;
use super::model::{drift_into, ModelParams};
use crate::error::{Error, Result};

/// `P_s f` on the trajectory grid.
#[derive(Debug, Clone)]
pub struct BackwardTestField {
    k: usize,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl BackwardTestField {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Site-major vector field `g_{s_i}`.
    pub fn at_index(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// `P_0 f`.
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn terminal(&self) -> &[f64] {
        self.values.last().expect("nonempty grid")
    }

    pub fn states(&self) -> usize {
        self.k + 1
    }
}

struct Workspace {
    uk: Vec<f64>,
    field: Vec<f64>,
    pairing: Vec<f64>,
    feedback: Vec<f64>,
    mu: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(sites: usize, q: usize) -> Self {
        Self {
            uk: vec![0.0; sites],
            field: vec![0.0; sites],
            pairing: vec![0.0; sites],
            feedback: vec![0.0; sites],
            mu: vec![0.0; q],
            tmp: vec![0.0; q],
        }
    }
}

/// `out = A^T g + (J*u^k) M^T g + (J^* * <g, M u>) e_k`.
fn adjoint_rhs(g: &[f64], u: &[f64], p: &ModelParams, ws: &mut Workspace, out: &mut [f64]) -> Result<()> {
    let q = p.states();
    let k = p.k();
    let mats = p.matrices();
    for (uk, site) in ws.uk.iter_mut().zip(u.chunks_exact(q)) {
        *uk = site[k];
    }
    p.kernel().conv_into(&ws.uk, &mut ws.field)?;
    for ((pair, gs), us) in ws
        .pairing
        .iter_mut()
        .zip(g.chunks_exact(q))
        .zip(u.chunks_exact(q))
    {
        mats.apply_m(us, &mut ws.mu);
        *pair = gs.iter().zip(&ws.mu).map(|(a, b)| a * b).sum();
    }
    p.kernel().conv_adjoint_into(&ws.pairing, &mut ws.feedback)?;
    for (x, (o, gs)) in out.chunks_exact_mut(q).zip(g.chunks_exact(q)).enumerate() {
        mats.apply_a_transpose(gs, o);
        mats.apply_m_transpose(gs, &mut ws.tmp);
        for (oi, ti) in o.iter_mut().zip(&ws.tmp) {
            *oi += ws.field[x] * ti;
        }
        o[k] += ws.feedback[x];
    }
    Ok(())
}

/// Solves the backward equation with terminal datum `terminal` at the last
/// time of `traj`, on the same grid.
pub fn backward_fp(terminal: &[f64], traj: &Trajectory, p: &ModelParams) -> Result<BackwardTestField> {
    if traj.k() != p.k() || traj.lattice() != p.lattice() {
        return Err(Error::GridMismatch(
            "trajectory lattice or state count differs from the model".into(),
        ));
    }
    if traj.is_empty() {
        return Err(Error::GridMismatch("empty trajectory".into()));
    }
    let q = p.states();
    let sites = p.lattice().num_sites();
    let len = sites * q;
    if terminal.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: terminal.len(),
        });
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("terminal datum"));
    }

    let steps = traj.len() - 1;
    let h = traj.step();
    let (mut sk, mut sc) = (Vec::new(), Vec::new());
    let drifts = (0..=steps)
        .map(|i| {
            let mut d = vec![0.0; len];
            drift_into(traj.values(i), p, &mut sk, &mut sc, &mut d)?;
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ws = Workspace::new(sites, q);
    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = terminal.to_vec();
    let mut g = terminal.to_vec();
    let mut mid = vec![0.0; len];
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];

    for i in (1..=steps).rev() {
        let (u_hi, u_lo) = (traj.values(i), traj.values(i - 1));
        let (f_hi, f_lo) = (&drifts[i], &drifts[i - 1]);
        for j in 0..len {
            mid[j] = 0.5 * (u_lo[j] + u_hi[j]) + h / 8.0 * (f_lo[j] - f_hi[j]);
        }
        // in reversed time tau = t - s the equation reads dg/dtau = rhs(g)
        adjoint_rhs(&g, u_hi, p, &mut ws, &mut k1)?;
        axpy(&g, 0.5 * h, &k1, &mut tmp);
        adjoint_rhs(&tmp, &mid, p, &mut ws, &mut k2)?;
        axpy(&g, 0.5 * h, &k2, &mut tmp);
        adjoint_rhs(&tmp, &mid, p, &mut ws, &mut k3)?;
        axpy(&g, h, &k3, &mut tmp);
        adjoint_rhs(&tmp, u_lo, p, &mut ws, &mut k4)?;
        for j in 0..len {
            g[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("backward test function"));
        }
        values[i - 1] = g.clone();
    }

    Ok(BackwardTestField {
        k: p.k(),
        times: traj.times().to_vec(),
        values,
    })
}

fn axpy(x: &[f64], alpha: f64, y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = a + alpha * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::{integrate, model_on, DensityField, InitialProfile};
    use crate::kernel::KernelSpec;
    use crate::lattice::TorusLattice;

    #[test]
    fn constants_are_preserved_without_kernel() {
        let p = model_on(&KernelSpec::zero(), TorusLattice::new(1, 5).unwrap(), 1.3, 2).unwrap();
        let u0 = DensityField::uniform(*p.lattice(), &[0.2, 0.3, 0.5]).unwrap();
        let traj = integrate(&u0, &p, 1.0, 0.01).unwrap();
        let ones = vec![1.0; 15];
        let g = backward_fp(&ones, &traj, &p).unwrap();
        for i in 0..traj.len() {
            assert!(g.at_index(i).iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn two_state_matrix_exponential() {
        let a = 1.7;
        let p = model_on(&KernelSpec::zero(), TorusLattice::new(1, 3).unwrap(), a, 1).unwrap();
        let u0 = DensityField::uniform(*p.lattice(), &[0.4, 0.6]).unwrap();
        let t = 1.2;
        let traj = integrate(&u0, &p, t, 0.01).unwrap();
        let terminal: Vec<f64> = (0..3).flat_map(|_| [1.0, 0.0]).collect();
        let g = backward_fp(&terminal, &traj, &p).unwrap();
        // e^{A^T tau} (1, 0) = (1, 1 - e^{-a tau})
        for (i, s) in traj.times().iter().enumerate() {
            let tau = t - s;
            for site in g.at_index(i).chunks_exact(2) {
                assert!((site[0] - 1.0).abs() < 1e-12);
                assert!((site[1] - (1.0 - (-a * tau).exp())).abs() < 1e-8);
            }
        }
        assert_eq!(g.terminal(), &terminal[..]);
    }

    #[test]
    fn pairing_with_linearized_perturbations_is_conserved() {
        // <g_s, u_s - u~_s> is constant up to second order in the perturbation
        let lattice = TorusLattice::new(1, 16).unwrap();
        let p = model_on(&KernelSpec::Cosine { beta: 0.7 }, lattice, 1.0, 2).unwrap();
        let profile = InitialProfile::Cosine {
            base: vec![0.3, 0.3, 0.4],
            amplitude: vec![0.1, 0.05, -0.15],
            mode: 1,
        };
        let u0 = profile.on_lattice(lattice).unwrap();
        let eps = 1e-6;
        let mut pert = u0.values().to_vec();
        for (x, site) in pert.chunks_exact_mut(3).enumerate() {
            let bump = eps * (1.0 + (x as f64 * 0.7).sin());
            site[2] += bump;
            site[0] -= bump;
        }
        let v0 = DensityField::new(lattice, 2, pert).unwrap();
        let h = 0.01;
        let traj = integrate(&u0, &p, 1.0, h).unwrap();
        let traj_v = integrate(&v0, &p, 1.0, h).unwrap();
        let terminal: Vec<f64> = (0..16)
            .flat_map(|x| {
                let c = (2.0 * std::f64::consts::PI * x as f64 / 16.0).cos();
                [0.3 * c, -0.2, 1.0 + c]
            })
            .collect();
        let g = backward_fp(&terminal, &traj, &p).unwrap();
        let pairing = |i: usize| -> f64 {
            g.at_index(i)
                .iter()
                .zip(traj.values(i).iter().zip(traj_v.values(i)))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum::<f64>()
                / eps
        };
        let start = pairing(0);
        assert!(start.abs() > 1e-2);
        for i in 0..traj.len() {
            assert!((pairing(i) - start).abs() < 1e-4 * start.abs(), "{} vs {}", pairing(i), start);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let p = model_on(&KernelSpec::zero(), TorusLattice::new(1, 3).unwrap(), 1.0, 1).unwrap();
        let other = model_on(&KernelSpec::zero(), TorusLattice::new(1, 4).unwrap(), 1.0, 1).unwrap();
        let u0 = DensityField::uniform(*p.lattice(), &[0.4, 0.6]).unwrap();
        let traj = integrate(&u0, &p, 0.5, 0.1).unwrap();
        assert!(backward_fp(&[1.0; 6], &traj, &other).is_err());
        assert!(backward_fp(&[1.0; 5], &traj, &p).is_err());
        assert!(backward_fp(&[f64::NAN; 6], &traj, &p).is_err());
    }
}
