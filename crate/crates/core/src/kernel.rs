//! Interaction kernels and their lattice discretisation.
//!
//! A [`KernelSpec`] describes a bounded nonnegative kernel on the unit torus.
//! [`DiscreteKernel`] holds its restriction `J^n_{x,y} = J(x/n, y/n)` to a
//! lattice, with the diagonal forced to zero, together with the discrete
//! convolutions used by the hydrodynamic solver and the simulator.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::TorusLattice;

/// Above this many sites the kernel is evaluated on demand instead of stored.
pub const DENSE_SITE_LIMIT: usize = 4096;

/// Periodic images summed for the wrapped Gaussian bump.
const GAUSSIAN_IMAGES: i32 = 4;

/// Kernel values tabulated on a fixed lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub lattice: TorusLattice,
    /// Row-major `N x N` table, `values[x * N + y] = J(x, y)`.
    pub values: Vec<f64>,
}

impl KernelTable {
    /// Reads a table from CSV rows `x_index,y_index,value`. Pairs that are
    /// not listed are zero. A header row is allowed.
    pub fn from_csv(path: impl AsRef<Path>, lattice: TorusLattice) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let n = lattice.num_sites();
        let mut values = vec![0.0; n * n];
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::InvalidKernel(format!(
                    "line {}: expected 3 fields, found {}",
                    line + 1,
                    record.len()
                )));
            }
            let parsed = (
                record[0].parse::<usize>(),
                record[1].parse::<usize>(),
                record[2].parse::<f64>(),
            );
            let (x, y, v) = match parsed {
                (Ok(x), Ok(y), Ok(v)) => (x, y, v),
                // header row
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::InvalidKernel(format!(
                        "line {}: cannot parse `{}`",
                        line + 1,
                        record.iter().collect::<Vec<_>>().join(",")
                    )))
                }
            };
            if x >= n || y >= n {
                return Err(Error::InvalidKernel(format!(
                    "line {}: site index out of range for {n} sites",
                    line + 1
                )));
            }
            values[x * n + y] = v;
        }
        Ok(Self { lattice, values })
    }
}

/// A bounded kernel `J: T^d x T^d -> [0, inf)` from the built-in catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `J = value`.
    Constant { value: f64 },
    /// `J(x, y) = prod_j (1 + beta cos(2 pi (x_j - y_j)))`, requires `|beta| <= 1`.
    Cosine { beta: f64 },
    /// Wrapped Gaussian of the displacement, `amplitude * prod_j sum_m exp(-(dx_j + m)^2 / 2 w^2)`.
    GaussianBump { amplitude: f64, width: f64 },
    /// Values read from a table on a specific lattice.
    Tabulated(Arc<KernelTable>),
}

impl KernelSpec {
    pub fn zero() -> Self {
        KernelSpec::Constant { value: 0.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Constant { .. } => "constant",
            KernelSpec::Cosine { .. } => "cosine",
            KernelSpec::GaussianBump { .. } => "gaussian",
            KernelSpec::Tabulated(_) => "tabulated",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Constant { value } => {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::InvalidKernel(format!(
                        "constant kernel must be finite and nonnegative, got {value}"
                    )));
                }
            }
            KernelSpec::Cosine { beta } => {
                if !beta.is_finite() || beta.abs() > 1.0 {
                    return Err(Error::InvalidKernel(format!(
                        "cosine kernel needs |beta| <= 1, got {beta}"
                    )));
                }
            }
            KernelSpec::GaussianBump { amplitude, width } => {
                if !(amplitude.is_finite() && amplitude >= 0.0 && width.is_finite() && width > 0.0)
                {
                    return Err(Error::InvalidKernel(format!(
                        "gaussian kernel needs amplitude >= 0 and width > 0, got ({amplitude}, {width})"
                    )));
                }
            }
            KernelSpec::Tabulated(ref t) => {
                if let Some(v) = t.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(Error::InvalidKernel(format!(
                        "tabulated kernel has entry {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates `J(x, y)` at macroscopic points. Tabulated kernels have no
    /// continuum values and return `None`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            KernelSpec::Constant { value } => Some(value),
            KernelSpec::Cosine { beta } => Some(
                x.iter()
                    .zip(y)
                    .map(|(a, b)| 1.0 + beta * (2.0 * PI * (a - b)).cos())
                    .product(),
            ),
            KernelSpec::GaussianBump { amplitude, width } => Some(
                amplitude
                    * x.iter()
                        .zip(y)
                        .map(|(a, b)| wrapped_gaussian(a - b, width))
                        .product::<f64>(),
            ),
            KernelSpec::Tabulated(_) => None,
        }
    }

    /// Value of the kernel between two sites of `lattice` (diagonal included).
    pub fn eval_sites(&self, lattice: &TorusLattice, x: usize, y: usize) -> Result<f64> {
        match self {
            KernelSpec::Tabulated(t) => {
                if t.lattice != *lattice {
                    return Err(Error::InvalidKernel(format!(
                        "table defined on side {} dim {}, lattice has side {} dim {}",
                        t.lattice.side(),
                        t.lattice.dim(),
                        lattice.side(),
                        lattice.dim()
                    )));
                }
                Ok(t.values[x * lattice.num_sites() + y])
            }
            _ => Ok(self
                .eval(&lattice.point(x), &lattice.point(y))
                .expect("closed-form kernel")),
        }
    }

    /// Closed-form `sup J` in dimension `d`, when available.
    pub fn sup_norm(&self, dim: usize) -> Option<f64> {
        match *self {
            KernelSpec::Constant { value } => Some(value),
            KernelSpec::Cosine { beta } => Some((1.0 + beta.abs()).powi(dim as i32)),
            KernelSpec::GaussianBump { amplitude, width } => {
                Some(amplitude * wrapped_gaussian(0.0, width).powi(dim as i32))
            }
            KernelSpec::Tabulated(ref t) => Some(t.values.iter().copied().fold(0.0, f64::max)),
        }
    }

    /// Closed-form `sup_x int J(x, y) dy` in dimension `d`, when available.
    pub fn l1_norm(&self, dim: usize) -> Option<f64> {
        match *self {
            KernelSpec::Constant { value } => Some(value),
            KernelSpec::Cosine { .. } => Some(1.0),
            KernelSpec::GaussianBump { amplitude, width } => {
                Some(amplitude * (width * (2.0 * PI).sqrt()).powi(dim as i32))
            }
            KernelSpec::Tabulated(_) => None,
        }
    }
}

fn wrapped_gaussian(dx: f64, width: f64) -> f64 {
    let r = dx - dx.round();
    (-GAUSSIAN_IMAGES..=GAUSSIAN_IMAGES)
        .map(|m| {
            let z = r + f64::from(m);
            (-z * z / (2.0 * width * width)).exp()
        })
        .sum()
}

/// How the discretised kernel is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoragePolicy {
    /// Dense when `N <= DENSE_SITE_LIMIT`, on demand otherwise.
    Auto,
    Dense,
    OnTheFly,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Vec<f64>),
    OnTheFly,
}

/// `J^n` on a lattice: zero diagonal, immutable after construction.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    lattice: TorusLattice,
    spec: KernelSpec,
    storage: Storage,
    norm_1n: f64,
    norm_inf: f64,
    constant: Option<f64>,
    symmetric: bool,
}

impl DiscreteKernel {
    pub fn discretize(spec: &KernelSpec, lattice: TorusLattice) -> Result<Self> {
        Self::with_storage(spec, lattice, StoragePolicy::Auto)
    }

    pub fn with_storage(
        spec: &KernelSpec,
        lattice: TorusLattice,
        policy: StoragePolicy,
    ) -> Result<Self> {
        if lattice.side() < 2 {
            return Err(Error::InvalidLattice(
                "kernel discretisation needs n >= 2".into(),
            ));
        }
        spec.validate()?;
        let n = lattice.num_sites();
        let dense = match policy {
            StoragePolicy::Auto => n <= DENSE_SITE_LIMIT,
            StoragePolicy::Dense => true,
            StoragePolicy::OnTheFly => false,
        };
        if let KernelSpec::Tabulated(_) = spec {
            // forces the lattice check once up front
            spec.eval_sites(&lattice, 0, 0)?;
        }

        let mut table = if dense { vec![0.0; n * n] } else { Vec::new() };
        let mut norm_1n: f64 = 0.0;
        let mut norm_inf: f64 = 0.0;
        let mut symmetric = true;
        for x in 0..n {
            let mut row_sum = 0.0;
            for y in 0..n {
                if x == y {
                    continue;
                }
                let v = spec.eval_sites(&lattice, x, y)?;
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidKernel(format!(
                        "J({x},{y}) = {v} is negative or not finite"
                    )));
                }
                if y < x && symmetric && v != spec.eval_sites(&lattice, y, x)? {
                    symmetric = false;
                }
                row_sum += v;
                norm_inf = norm_inf.max(v);
                if dense {
                    table[x * n + y] = v;
                }
            }
            norm_1n = norm_1n.max(row_sum / lattice.volume());
        }
        let constant = match *spec {
            KernelSpec::Constant { value } => Some(value),
            _ => None,
        };
        Ok(Self {
            lattice,
            spec: spec.clone(),
            storage: if dense {
                Storage::Dense(table)
            } else {
                Storage::OnTheFly
            },
            norm_1n,
            norm_inf,
            constant,
            symmetric,
        })
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// `||J||_{1,n} = max_x n^{-d} sum_y J^n_{x,y}`.
    pub fn norm_1n(&self) -> f64 {
        self.norm_1n
    }

    /// Largest off-diagonal entry.
    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    /// `Some(c)` when every off-diagonal entry equals `c`.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        match &self.storage {
            Storage::Dense(t) => t[x * self.lattice.num_sites() + y],
            Storage::OnTheFly => self
                .spec
                .eval_sites(&self.lattice, x, y)
                .expect("validated at construction"),
        }
    }

    /// Writes `J^n_{x, .}` into `out`.
    pub fn row_into(&self, x: usize, out: &mut [f64]) {
        let n = self.lattice.num_sites();
        match &self.storage {
            Storage::Dense(t) => out.copy_from_slice(&t[x * n..(x + 1) * n]),
            Storage::OnTheFly => {
                for (y, o) in out.iter_mut().enumerate() {
                    *o = self.entry(x, y);
                }
            }
        }
    }

    /// Writes `J^n_{., y}` into `out`.
    pub fn column_into(&self, y: usize, out: &mut [f64]) {
        if self.symmetric {
            return self.row_into(y, out);
        }
        for (x, o) in out.iter_mut().enumerate() {
            *o = self.entry(x, y);
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let n = self.lattice.num_sites();
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
        Ok(())
    }

    /// `(J^n * g)_x = n^{-d} sum_y J^n_{x,y} g_y`.
    pub fn conv(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; g.len()];
        self.conv_into(g, &mut out)?;
        Ok(out)
    }

    pub fn conv_into(&self, g: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(g.len())?;
        self.check_len(out.len())?;
        let n = self.lattice.num_sites();
        let inv = 1.0 / self.lattice.volume();
        if let Some(c) = self.constant {
            let total: f64 = g.iter().sum();
            for (o, gx) in out.iter_mut().zip(g) {
                *o = c * (total - gx) * inv;
            }
            return Ok(());
        }
        match &self.storage {
            Storage::Dense(t) => {
                for (x, o) in out.iter_mut().enumerate() {
                    let row = &t[x * n..(x + 1) * n];
                    *o = row.iter().zip(g).map(|(j, v)| j * v).sum::<f64>() * inv;
                }
            }
            Storage::OnTheFly => {
                for (x, o) in out.iter_mut().enumerate() {
                    *o = (0..n).map(|y| self.entry(x, y) * g[y]).sum::<f64>() * inv;
                }
            }
        }
        Ok(())
    }

    /// `(J^{n,*} * g)_x = n^{-d} sum_y J^n_{y,x} g_y`.
    pub fn conv_adjoint(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; g.len()];
        self.conv_adjoint_into(g, &mut out)?;
        Ok(out)
    }

    pub fn conv_adjoint_into(&self, g: &[f64], out: &mut [f64]) -> Result<()> {
        if self.symmetric || self.constant.is_some() {
            return self.conv_into(g, out);
        }
        self.check_len(g.len())?;
        self.check_len(out.len())?;
        let n = self.lattice.num_sites();
        let inv = 1.0 / self.lattice.volume();
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.storage {
            Storage::Dense(t) => {
                for (y, gy) in g.iter().enumerate() {
                    let row = &t[y * n..(y + 1) * n];
                    for (o, j) in out.iter_mut().zip(row) {
                        *o += j * gy;
                    }
                }
            }
            Storage::OnTheFly => {
                for (x, o) in out.iter_mut().enumerate() {
                    *o = (0..n).map(|y| self.entry(y, x) * g[y]).sum::<f64>();
                }
            }
        }
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> TorusLattice {
        TorusLattice::new(1, n).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn weighted_dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
    }

    /// Asymmetric tabulated kernel for adjoint checks.
    fn skewed(n: usize, seed: u64) -> KernelSpec {
        let l = line(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * n).map(|_| rng.random_range(0.0..2.0)).collect();
        KernelSpec::Tabulated(Arc::new(KernelTable { lattice: l, values }))
    }

    #[test]
    fn zero_kernel() {
        let k = DiscreteKernel::discretize(&KernelSpec::zero(), line(5)).unwrap();
        assert_eq!(k.norm_1n(), 0.0);
        assert!((0..5).all(|x| (0..5).all(|y| k.entry(x, y) == 0.0)));
        let g = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert!(k.conv(&g).unwrap().iter().all(|v| *v == 0.0));
        assert!(k.conv_adjoint(&g).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_kernel_on_four_sites() {
        let k = DiscreteKernel::discretize(&KernelSpec::Constant { value: 1.0 }, line(4)).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(k.entry(x, y), if x == y { 0.0 } else { 1.0 });
            }
        }
        assert_eq!(k.norm_1n(), 0.75);
    }

    #[test]
    fn constant_kernel_convolves_ones() {
        let c = 2.5;
        let k = DiscreteKernel::discretize(&KernelSpec::Constant { value: c }, line(4)).unwrap();
        for v in k.conv(&[1.0; 4]).unwrap() {
            assert!((v - c * 0.75).abs() < 1e-15);
        }
        assert!(k.conv(&[0.0; 4]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_kernel_is_symmetric_circulant() {
        let n = 8;
        let k = DiscreteKernel::discretize(&KernelSpec::Cosine { beta: 0.6 }, line(n)).unwrap();
        assert!(k.is_symmetric());
        for x in 0..n {
            assert_eq!(k.entry(x, x), 0.0);
            for y in 0..n {
                let expected = 1.0 + 0.6 * (2.0 * PI * (x as f64 - y as f64) / n as f64).cos();
                if x != y {
                    assert!((k.entry(x, y) - expected).abs() < 1e-14);
                }
                assert!((k.entry(x, y) - k.entry(y, x)).abs() < 1e-15);
                let shifted = k.entry((x + 1) % n, (y + 1) % n);
                assert!((k.entry(x, y) - shifted).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_negative_values() {
        assert!(DiscreteKernel::discretize(&KernelSpec::Cosine { beta: 1.5 }, line(8)).is_err());
        assert!(
            DiscreteKernel::discretize(&KernelSpec::Constant { value: -1.0 }, line(8)).is_err()
        );
        let mut values = vec![1.0; 16];
        values[1] = f64::NAN;
        let bad = KernelSpec::Tabulated(Arc::new(KernelTable {
            lattice: line(4),
            values,
        }));
        assert!(DiscreteKernel::discretize(&bad, line(4)).is_err());
    }

    #[test]
    fn rejects_single_site_lattice_and_bad_lengths() {
        assert!(DiscreteKernel::discretize(&KernelSpec::zero(), line(1)).is_err());
        let k = DiscreteKernel::discretize(&KernelSpec::zero(), line(4)).unwrap();
        assert!(matches!(
            k.conv(&[1.0; 3]),
            Err(Error::DimensionMismatch {
                expected: 4,
                got: 3
            })
        ));
        assert!(k.conv_adjoint(&[1.0; 5]).is_err());
    }

    #[test]
    fn tabulated_kernel_must_match_lattice() {
        let spec = skewed(4, 1);
        assert!(DiscreteKernel::discretize(&spec, line(5)).is_err());
        let k = DiscreteKernel::discretize(&spec, line(4)).unwrap();
        assert!(!k.is_symmetric());
    }

    #[test]
    fn dense_and_on_the_fly_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l = TorusLattice::new(2, 6).unwrap();
        for spec in [
            KernelSpec::Cosine { beta: 0.8 },
            KernelSpec::GaussianBump {
                amplitude: 1.5,
                width: 0.2,
            },
        ] {
            let dense = DiscreteKernel::with_storage(&spec, l, StoragePolicy::Dense).unwrap();
            let lazy = DiscreteKernel::with_storage(&spec, l, StoragePolicy::OnTheFly).unwrap();
            assert!(dense.is_dense() && !lazy.is_dense());
            assert!((dense.norm_1n() - lazy.norm_1n()).abs() < 1e-15);
            for _ in 0..10 {
                let g = random_field(&mut rng, l.num_sites());
                let a = dense.conv(&g).unwrap();
                let b = lazy.conv(&g).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
        let spec = skewed(7, 3);
        let dense = DiscreteKernel::with_storage(&spec, line(7), StoragePolicy::Dense).unwrap();
        let lazy = DiscreteKernel::with_storage(&spec, line(7), StoragePolicy::OnTheFly).unwrap();
        let g = random_field(&mut rng, 7);
        let (a, b) = (dense.conv_adjoint(&g).unwrap(), lazy.conv_adjoint(&g).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn symmetric_adjoint_equals_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = DiscreteKernel::discretize(&KernelSpec::Cosine { beta: 0.3 }, line(16)).unwrap();
        let g = random_field(&mut rng, 16);
        assert_eq!(k.conv(&g).unwrap(), k.conv_adjoint(&g).unwrap());
    }

    #[test]
    fn adjointness_over_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 9;
        let k = DiscreteKernel::discretize(&skewed(n, 9), line(n)).unwrap();
        for _ in 0..100 {
            let g = random_field(&mut rng, n);
            let h = random_field(&mut rng, n);
            let lhs = weighted_dot(&k.conv(&g).unwrap(), &h);
            let rhs = weighted_dot(&g, &k.conv_adjoint(&h).unwrap());
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn gaussian_norms_match_lattice_sums() {
        let spec = KernelSpec::GaussianBump {
            amplitude: 2.0,
            width: 0.1,
        };
        let l = line(256);
        let k = DiscreteKernel::discretize(&spec, l).unwrap();
        // the lattice sum misses only the diagonal term J(x, x) / n
        let diag = spec.sup_norm(1).unwrap() / 256.0;
        assert!((k.norm_1n() + diag - spec.l1_norm(1).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        std::fs::write(&path, "x,y,value\n0,1,2.0\n1,0,0.5\n2,2,9.0\n").unwrap();
        let table = KernelTable::from_csv(&path, line(3)).unwrap();
        let k = DiscreteKernel::discretize(&KernelSpec::Tabulated(Arc::new(table)), line(3))
            .unwrap();
        assert_eq!(k.entry(0, 1), 2.0);
        assert_eq!(k.entry(1, 0), 0.5);
        assert_eq!(k.entry(2, 2), 0.0);
        assert_eq!(k.entry(0, 2), 0.0);
        std::fs::write(&path, "0,7,1.0\n").unwrap();
        assert!(KernelTable::from_csv(&path, line(3)).is_err());
    }

    proptest! {
        #[test]
        fn conv_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = DiscreteKernel::discretize(&KernelSpec::Cosine { beta: 0.9 }, line(12)).unwrap();
            let g = random_field(&mut rng, 12);
            let h = random_field(&mut rng, 12);
            let mix: Vec<f64> = g.iter().zip(&h).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = k.conv(&mix).unwrap();
            let (cg, ch) = (k.conv(&g).unwrap(), k.conv(&h).unwrap());
            for x in 0..12 {
                prop_assert!((lhs[x] - alpha * cg[x] - beta * ch[x]).abs() < 1e-12);
            }
        }

        #[test]
        fn conv_sup_norm_bound(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = DiscreteKernel::discretize(&skewed(10, seed), line(10)).unwrap();
            let g = random_field(&mut rng, 10);
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let out = k.conv(&g).unwrap();
            let omax = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(omax <= k.norm_1n() * gmax + 1e-12);
        }
    }
}
