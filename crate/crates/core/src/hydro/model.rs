use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::DiscreteKernel;
use crate::lattice::TorusLattice;

/// Tolerance on per-site simplex sums.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// The `(k+1) x (k+1)` matrices of the hydrodynamic equation, row-major.
///
/// `A` resets state `k` to state `0` at rate `a`. `M` moves mass one step up
/// the chain `0 -> 1 -> ... -> k`; state `k` is not pushed further.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixAM {
    k: usize,
    a: Vec<f64>,
    m: Vec<f64>,
}

impl MatrixAM {
    pub fn new(rate: f64, k: usize) -> Self {
        let q = k + 1;
        let mut a = vec![0.0; q * q];
        a[k] = rate; // (0, k)
        a[k * q + k] = -rate; // (k, k)
        let mut m = vec![0.0; q * q];
        for i in 0..q {
            if i >= 1 {
                m[i * q + i - 1] = 1.0;
            }
            if i < k {
                m[i * q + i] = -1.0;
            }
        }
        Self { k, a, m }
    }

    pub fn size(&self) -> usize {
        self.k + 1
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.k + 1) + j]
    }

    #[inline]
    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.m[i * (self.k + 1) + j]
    }

    /// `out = A v`.
    pub fn apply_a(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.a, v, out, false);
    }

    /// `out = M v`.
    pub fn apply_m(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.m, v, out, false);
    }

    /// `out = A^T v`.
    pub fn apply_a_transpose(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.a, v, out, true);
    }

    /// `out = M^T v`.
    pub fn apply_m_transpose(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.m, v, out, true);
    }

    /// Max column absolute sum of `A`.
    pub fn norm_a(&self) -> f64 {
        max_col_sum(&self.a, self.k + 1)
    }

    /// Max column absolute sum of `M`.
    pub fn norm_m(&self) -> f64 {
        max_col_sum(&self.m, self.k + 1)
    }

    pub fn column_sums(&self) -> (Vec<f64>, Vec<f64>) {
        let q = self.k + 1;
        let col = |mat: &[f64]| (0..q).map(|j| (0..q).map(|i| mat[i * q + j]).sum()).collect();
        (col(&self.a), col(&self.m))
    }
}

fn mat_vec(mat: &[f64], v: &[f64], out: &mut [f64], transpose: bool) {
    let q = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..q)
            .map(|j| {
                let e = if transpose { mat[j * q + i] } else { mat[i * q + j] };
                e * v[j]
            })
            .sum();
    }
}

fn max_col_sum(mat: &[f64], q: usize) -> f64 {
    (0..q)
        .map(|j| (0..q).map(|i| mat[i * q + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Recovery rate, threshold state and discretised kernel.
#[derive(Debug, Clone)]
pub struct ModelParams {
    a: f64,
    k: usize,
    kernel: Arc<DiscreteKernel>,
    matrices: MatrixAM,
}

impl ModelParams {
    pub fn new(a: f64, k: usize, kernel: Arc<DiscreteKernel>) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param("a", format!("recovery rate must be > 0, got {a}")));
        }
        if k == 0 || k > u8::MAX as usize - 1 {
            return Err(Error::param("k", format!("threshold must be in 1..=254, got {k}")));
        }
        Ok(Self {
            a,
            k,
            kernel,
            matrices: MatrixAM::new(a, k),
        })
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of states, `k + 1`.
    #[inline]
    pub fn states(&self) -> usize {
        self.k + 1
    }

    #[inline]
    pub fn kernel(&self) -> &DiscreteKernel {
        &self.kernel
    }

    pub fn kernel_arc(&self) -> Arc<DiscreteKernel> {
        Arc::clone(&self.kernel)
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        self.kernel.lattice()
    }

    pub fn matrices(&self) -> &MatrixAM {
        &self.matrices
    }

    /// Lipschitz scale `||A|| + ||J||_{1,n} ||M||`.
    pub fn lipschitz_scale(&self) -> f64 {
        self.matrices.norm_a() + self.kernel.norm_1n() * self.matrices.norm_m()
    }

    /// Default RK4 step `min(1e-2, 0.1 / lambda)`.
    pub fn default_step(&self) -> f64 {
        let lambda = self.lipschitz_scale();
        if lambda > 0.0 {
            (0.1 / lambda).min(1e-2)
        } else {
            1e-2
        }
    }

    /// Decay rate of the positivity floor, `max(a, ||J||_{1,n})`.
    pub fn floor_rate(&self) -> f64 {
        self.a.max(self.kernel.norm_1n())
    }
}

/// Per-site probability vectors over `{0..k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    lattice: TorusLattice,
    k: usize,
    values: Vec<f64>,
}

impl DensityField {
    /// Builds a field from site-major values `values[x * (k+1) + i]` and
    /// checks the simplex constraint at every site.
    pub fn new(lattice: TorusLattice, k: usize, values: Vec<f64>) -> Result<Self> {
        let field = Self::new_unchecked(lattice, k, values)?;
        field.check_simplex()?;
        Ok(field)
    }

    /// Shape check only; the simplex invariant is not verified.
    pub(crate) fn new_unchecked(lattice: TorusLattice, k: usize, values: Vec<f64>) -> Result<Self> {
        let expected = lattice.num_sites() * (k + 1);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { lattice, k, values })
    }

    /// The same probability vector at every site.
    pub fn uniform(lattice: TorusLattice, probs: &[f64]) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::param("probs", "need at least two states"));
        }
        let values = probs
            .iter()
            .copied()
            .cycle()
            .take(probs.len() * lattice.num_sites())
            .collect();
        Self::new(lattice, probs.len() - 1, values)
    }

    pub fn check_simplex(&self) -> Result<()> {
        for (x, site) in self.values.chunks_exact(self.k + 1).enumerate() {
            if let Some(v) = site.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidSimplex {
                    site: x,
                    reason: format!("component {v}"),
                });
            }
            let sum: f64 = site.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidSimplex {
                    site: x,
                    reason: format!("components sum to {sum}"),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn states(&self) -> usize {
        self.k + 1
    }

    #[inline]
    pub fn num_sites(&self) -> usize {
        self.lattice.num_sites()
    }

    #[inline]
    pub fn site(&self, x: usize) -> &[f64] {
        let q = self.k + 1;
        &self.values[x * q..(x + 1) * q]
    }

    #[inline]
    pub fn get(&self, x: usize, i: usize) -> f64 {
        self.values[x * (self.k + 1) + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The per-site field `x -> u_x^i`.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values
            .chunks_exact(self.k + 1)
            .map(|s| s[i])
            .collect()
    }

    pub fn min_component(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest deviation of a per-site sum from one.
    pub fn simplex_defect(&self) -> f64 {
        self.values
            .chunks_exact(self.k + 1)
            .map(|s| (s.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Subsamples onto a coarser lattice whose side divides ours.
    pub fn restrict(&self, coarse: TorusLattice) -> Result<DensityField> {
        let q = self.k + 1;
        let mut values = Vec::with_capacity(coarse.num_sites() * q);
        for x in 0..coarse.num_sites() {
            let fine = self.lattice.embed_from(&coarse, x)?;
            values.extend_from_slice(self.site(fine));
        }
        DensityField::new_unchecked(coarse, self.k, values)
    }

    /// Largest componentwise difference to another field on the same lattice.
    pub fn sup_distance(&self, other: &DensityField) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: other.values.len(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

pub(crate) fn check_compatible(u: &DensityField, p: &ModelParams) -> Result<()> {
    if u.k() != p.k() {
        return Err(Error::DimensionMismatch {
            expected: p.states(),
            got: u.states(),
        });
    }
    if u.lattice() != p.lattice() {
        return Err(Error::DimensionMismatch {
            expected: p.lattice().num_sites(),
            got: u.num_sites(),
        });
    }
    Ok(())
}

/// Right-hand side of the lattice hydrodynamic equation,
/// `A u_x + (J^n * u^k)_x M u_x`, written into `out` (site-major).
pub(crate) fn drift_into(
    values: &[f64],
    p: &ModelParams,
    scratch_k: &mut Vec<f64>,
    scratch_conv: &mut Vec<f64>,
    out: &mut [f64],
) -> Result<()> {
    let q = p.states();
    let k = p.k();
    scratch_k.clear();
    scratch_k.extend(values.chunks_exact(q).map(|s| s[k]));
    scratch_conv.resize(scratch_k.len(), 0.0);
    p.kernel().conv_into(scratch_k, scratch_conv)?;
    let mats = p.matrices();
    let mut mu = vec![0.0; q];
    for ((site, o), field) in values
        .chunks_exact(q)
        .zip(out.chunks_exact_mut(q))
        .zip(scratch_conv.iter())
    {
        mats.apply_a(site, o);
        mats.apply_m(site, &mut mu);
        for (oi, mi) in o.iter_mut().zip(&mu) {
            *oi += field * mi;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("drift"));
    }
    Ok(())
}

/// Drift of the lattice hydrodynamic equation at `u`, site-major.
pub fn drift(u: &DensityField, p: &ModelParams) -> Result<Vec<f64>> {
    check_compatible(u, p)?;
    u.check_simplex()?;
    let mut out = vec![0.0; u.values().len()];
    drift_into(u.values(), p, &mut Vec::new(), &mut Vec::new(), &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;

    fn params(a: f64, k: usize, spec: KernelSpec, n: usize) -> ModelParams {
        let l = TorusLattice::new(1, n).unwrap();
        let kernel = DiscreteKernel::discretize(&spec, l).unwrap();
        ModelParams::new(a, k, Arc::new(kernel)).unwrap()
    }

    #[test]
    fn matrices_conserve_mass() {
        for k in 1..6 {
            let m = MatrixAM::new(1.7, k);
            let (ca, cm) = m.column_sums();
            assert!(ca.iter().chain(&cm).all(|c| c.abs() < 1e-15));
            let nonzero_a = (0..=k)
                .flat_map(|i| (0..=k).map(move |j| (i, j)))
                .filter(|&(i, j)| m.a(i, j) != 0.0)
                .count();
            assert_eq!(nonzero_a, 2);
            assert_eq!(m.a(0, k), 1.7);
            assert_eq!(m.a(k, k), -1.7);
            assert_eq!(m.norm_a(), 3.4);
            assert_eq!(m.norm_m(), 2.0);
        }
    }

    #[test]
    fn m_stencil_for_three_states() {
        let m = MatrixAM::new(1.0, 2);
        let mut out = [0.0; 3];
        m.apply_m(&[0.2, 0.3, 0.5], &mut out);
        assert_eq!(out, [-0.2, 0.2 - 0.3, 0.3]);
    }

    #[test]
    fn transposes_match_entries() {
        let m = MatrixAM::new(2.0, 3);
        let v = [1.0, -2.0, 0.5, 3.0];
        let mut out = [0.0; 4];
        m.apply_m_transpose(&v, &mut out);
        for i in 0..4 {
            let e: f64 = (0..4).map(|j| m.m(j, i) * v[j]).sum();
            assert_eq!(out[i], e);
        }
        m.apply_a_transpose(&v, &mut out);
        assert_eq!(out, [0.0, 0.0, 0.0, 2.0 * 1.0 - 2.0 * 3.0]);
    }

    #[test]
    fn params_validation() {
        let l = TorusLattice::new(1, 4).unwrap();
        let kernel = Arc::new(DiscreteKernel::discretize(&KernelSpec::zero(), l).unwrap());
        assert!(ModelParams::new(0.0, 1, kernel.clone()).is_err());
        assert!(ModelParams::new(1.0, 0, kernel.clone()).is_err());
        assert!(ModelParams::new(1.0, 1, kernel).is_ok());
    }

    #[test]
    fn density_field_validation() {
        let l = TorusLattice::new(1, 2).unwrap();
        assert!(DensityField::new(l, 1, vec![0.5, 0.5, 0.3, 0.7]).is_ok());
        assert!(DensityField::new(l, 1, vec![0.5, 0.5, 0.3, 0.6]).is_err());
        assert!(DensityField::new(l, 1, vec![1.5, -0.5, 0.3, 0.7]).is_err());
        assert!(DensityField::new(l, 1, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn decoupled_drift() {
        let p = params(2.0, 1, KernelSpec::zero(), 5);
        let u = DensityField::uniform(*p.lattice(), &[0.3, 0.7]).unwrap();
        let d = drift(&u, &p).unwrap();
        for s in d.chunks_exact(2) {
            assert!((s[0] - 1.4).abs() < 1e-15);
            assert!((s[1] + 1.4).abs() < 1e-15);
        }
    }

    #[test]
    fn drift_sums_to_zero_and_is_homogeneous() {
        let p = params(1.3, 3, KernelSpec::Constant { value: 2.0 }, 6);
        let u = DensityField::uniform(*p.lattice(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let d = drift(&u, &p).unwrap();
        let first = d[..4].to_vec();
        for s in d.chunks_exact(4) {
            assert!(s.iter().sum::<f64>().abs() < 1e-12);
            assert_eq!(s, &first[..]);
        }
        // hand evaluation: c = 2 * 0.4 * 5/6
        let c = 2.0 * 0.4 * 5.0 / 6.0;
        let expected = [
            1.3 * 0.4 - c * 0.1,
            c * (0.1 - 0.2),
            c * (0.2 - 0.3),
            -1.3 * 0.4 + c * 0.3,
        ];
        for (a, b) in first.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn restrict_subsamples() {
        let l = TorusLattice::new(1, 4).unwrap();
        let u = DensityField::new(l, 1, vec![0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6]).unwrap();
        let c = u.restrict(TorusLattice::new(1, 2).unwrap()).unwrap();
        assert_eq!(c.values(), &[0.1, 0.9, 0.3, 0.7]);
    }
}
