//! Observables of a configuration: centered occupation fields, their
//! pairings with test functions, and the carré du champ.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcp::{RateState, SpinConfig};
use crate::hydro::{DensityField, ModelParams};
use crate::lattice::TorusLattice;

/// Smooth periodic test functions, evaluated at the lattice points `x / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `f = 1`.
    One,
    /// `cos(2 pi m . x)`; a mode shorter than the dimension is zero-padded.
    Cos { mode: Vec<i32> },
    Sin { mode: Vec<i32> },
    /// `exp(-sum_j sin^2(pi (x_j - c_j)) / w^2)`, smooth and periodic.
    Bump { center: Vec<f64>, width: f64 },
    /// Arbitrary per-site values.
    Tabulated { name: String, values: Vec<f64> },
}

impl TestFunction {
    pub fn cos1() -> Self {
        TestFunction::Cos { mode: vec![1] }
    }

    pub fn sin1() -> Self {
        TestFunction::Sin { mode: vec![1] }
    }

    pub fn name(&self) -> String {
        let modes = |m: &[i32]| {
            m.iter()
                .map(i32::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            TestFunction::One => "one".into(),
            TestFunction::Cos { mode } => format!("cos[{}]", modes(mode)),
            TestFunction::Sin { mode } => format!("sin[{}]", modes(mode)),
            TestFunction::Bump { width, .. } => format!("bump[{width}]"),
            TestFunction::Tabulated { name, .. } => name.clone(),
        }
    }

    fn phase(mode: &[i32], x: &[f64]) -> f64 {
        2.0 * PI
            * mode
                .iter()
                .zip(x)
                .map(|(m, xj)| f64::from(*m) * xj)
                .sum::<f64>()
    }

    /// Value at a macroscopic point. Tabulated functions have no such value.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        Some(match self {
            TestFunction::One => 1.0,
            TestFunction::Cos { mode } => Self::phase(mode, x).cos(),
            TestFunction::Sin { mode } => Self::phase(mode, x).sin(),
            TestFunction::Bump { center, width } => {
                let r2: f64 = x
                    .iter()
                    .zip(center.iter().chain(std::iter::repeat(&0.0)))
                    .map(|(xj, cj)| (PI * (xj - cj)).sin().powi(2))
                    .sum();
                (-r2 / (width * width)).exp()
            }
            TestFunction::Tabulated { .. } => return None,
        })
    }

    pub fn values_on(&self, lattice: &TorusLattice) -> Result<Vec<f64>> {
        match self {
            TestFunction::Tabulated { values, .. } => {
                if values.len() != lattice.num_sites() {
                    return Err(Error::DimensionMismatch {
                        expected: lattice.num_sites(),
                        got: values.len(),
                    });
                }
                Ok(values.clone())
            }
            TestFunction::Bump { width, .. } if !(*width > 0.0) => {
                Err(Error::param("width", "bump width must be positive"))
            }
            _ => Ok(lattice
                .points()
                .map(|p| self.eval(&p).expect("closed form"))
                .collect()),
        }
    }

    /// `sup |f|` over the torus (over the table for tabulated functions).
    pub fn sup_norm(&self) -> f64 {
        match self {
            TestFunction::Sin { mode } if mode.iter().all(|m| *m == 0) => 0.0,
            TestFunction::Tabulated { values, .. } => {
                values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
            _ => 1.0,
        }
    }
}

/// `||f||^2_{l2_n} = n^{-d} sum_x f(x/n)^2`.
pub fn l2n_norm_sq(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// `w_x^i = 1(sigma_x = i) - u_x^i`, site-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredField {
    lattice: TorusLattice,
    k: usize,
    values: Vec<f64>,
}

impl CenteredField {
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, x: usize, i: usize) -> f64 {
        self.values[x * (self.k + 1) + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(i).step_by(self.k + 1).copied()
    }
}

pub fn centered_field(config: &SpinConfig, u: &DensityField) -> Result<CenteredField> {
    if config.lattice() != u.lattice() || config.k() != u.k() {
        return Err(Error::DimensionMismatch {
            expected: u.values().len(),
            got: config.num_sites() * (config.k() + 1),
        });
    }
    let q = u.states();
    let mut values = u.values().iter().map(|v| -v).collect::<Vec<_>>();
    for (x, s) in config.states().iter().enumerate() {
        values[x * q + usize::from(*s)] += 1.0;
    }
    Ok(CenteredField {
        lattice: *u.lattice(),
        k: u.k(),
        values,
    })
}

fn check_state(w: &CenteredField, f: &[f64], i: usize) -> Result<()> {
    if f.len() != w.lattice.num_sites() {
        return Err(Error::DimensionMismatch {
            expected: w.lattice.num_sites(),
            got: f.len(),
        });
    }
    if i > w.k {
        return Err(Error::param("state", format!("{i} exceeds k = {}", w.k)));
    }
    Ok(())
}

fn pairing(w: &CenteredField, f: &[f64], i: usize) -> Result<f64> {
    check_state(w, f, i)?;
    Ok(w.component(i).zip(f).map(|(wi, fx)| wi * fx).sum())
}

/// `n^{-d} sum_x w_x^i f(x/n)`, with `f` given by its lattice values.
pub fn lln_error(w: &CenteredField, f: &[f64], i: usize) -> Result<f64> {
    Ok(pairing(w, f, i)? / w.lattice.volume())
}

/// `n^{-d/2} sum_x w_x^i f(x/n)`.
pub fn fluctuation(w: &CenteredField, f: &[f64], i: usize) -> Result<f64> {
    Ok(pairing(w, f, i)? / w.lattice.volume().sqrt())
}

#[inline]
fn jump_factor(s: usize, i: usize, q: usize) -> f64 {
    // 1(sigma = i - 1) - 1(sigma = i), indices on the ring Z/(k+1)
    let below = (i + q - 1) % q;
    f64::from(u8::from(s == below)) - f64::from(u8::from(s == i))
}

/// Bilinear carré du champ with site weights `f(x) g(x)` and precomputed rates.
pub fn carre_du_champ_with_rates(
    config: &SpinConfig,
    rates: &[f64],
    f: &[f64],
    g: &[f64],
    i: usize,
    j: usize,
) -> Result<f64> {
    let n = config.num_sites();
    if rates.len() != n || f.len() != n || g.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rates.len().min(f.len()).min(g.len()),
        });
    }
    let q = config.k() + 1;
    if i >= q || j >= q {
        return Err(Error::param("state", format!("states must be below {q}")));
    }
    let sum: f64 = config
        .states()
        .iter()
        .enumerate()
        .map(|(x, &s)| {
            let s = usize::from(s);
            rates[x] * jump_factor(s, i, q) * jump_factor(s, j, q) * f[x] * g[x]
        })
        .sum();
    Ok(sum / config.lattice().volume())
}

/// `n^{-d} sum_x c_x (1(sigma_x=i-1) - 1(sigma_x=i)) (1(sigma_x=j-1) - 1(sigma_x=j)) f(x/n)^2`.
pub fn carre_du_champ(
    config: &SpinConfig,
    p: &ModelParams,
    f: &[f64],
    i: usize,
    j: usize,
) -> Result<f64> {
    let rates = RateState::from_scratch(config, p)?.rates;
    carre_du_champ_with_rates(config, &rates, f, f, i, j)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::gcp::sample_initial;
    use crate::kernel::{DiscreteKernel, KernelSpec};
    use crate::rng::replica_rng;

    fn model(spec: KernelSpec, n: usize, a: f64, k: usize) -> ModelParams {
        let l = TorusLattice::new(1, n).unwrap();
        ModelParams::new(a, k, Arc::new(DiscreteKernel::discretize(&spec, l).unwrap())).unwrap()
    }

    #[test]
    fn test_function_catalog() {
        let l = TorusLattice::new(1, 8).unwrap();
        let c = TestFunction::cos1().values_on(&l).unwrap();
        assert!((c[2]).abs() < 1e-15 && (c[4] + 1.0).abs() < 1e-15);
        let s = TestFunction::sin1().values_on(&l).unwrap();
        assert!((s[2] - 1.0).abs() < 1e-15);
        assert!((l2n_norm_sq(&c) - 0.5).abs() < 1e-14);
        let b = TestFunction::Bump { center: vec![0.25], width: 0.3 };
        let bv = b.values_on(&l).unwrap();
        assert_eq!(bv[2], 1.0);
        assert!(bv.iter().all(|v| *v > 0.0 && *v <= 1.0));
        let t = TestFunction::Tabulated { name: "t".into(), values: vec![-3.0, 1.0] };
        assert_eq!(t.sup_norm(), 3.0);
        assert!(t.values_on(&l).is_err());
        assert_eq!(TestFunction::cos1().name(), "cos[1]");
    }

    #[test]
    fn centered_field_examples() {
        let l = TorusLattice::new(1, 2).unwrap();
        let u = DensityField::new(l, 1, vec![0.4, 0.6, 0.4, 0.6]).unwrap();
        let s = SpinConfig::new(l, 1, vec![1, 0]).unwrap();
        let w = centered_field(&s, &u).unwrap();
        assert!((w.get(0, 0) + 0.4).abs() < 1e-15 && (w.get(0, 1) - 0.4).abs() < 1e-15);
        let u = DensityField::uniform(l, &[0.0, 1.0]).unwrap();
        let s = sample_initial(&u, &mut replica_rng(0, 0)).unwrap();
        assert!(centered_field(&s, &u).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lln_error_with_constant_function_counts_states() {
        let l = TorusLattice::new(1, 64).unwrap();
        let u = DensityField::uniform(l, &[0.2, 0.5, 0.3]).unwrap();
        let s = sample_initial(&u, &mut replica_rng(4, 0)).unwrap();
        let w = centered_field(&s, &u).unwrap();
        let one = vec![1.0; 64];
        for i in 0..3 {
            let expect = s.counts()[i] as f64 / 64.0 - u.get(0, i);
            let e = lln_error(&w, &one, i).unwrap();
            assert!((e - expect).abs() < 1e-14);
            let x = fluctuation(&w, &one, i).unwrap();
            assert!((x - 8.0 * e).abs() < 1e-12);
        }
    }

    #[test]
    fn fluctuation_variance_under_initial_measure() {
        let l = TorusLattice::new(1, 128).unwrap();
        let u = DensityField::uniform(l, &[0.5, 0.5]).unwrap();
        let one = vec![1.0; 128];
        let xs: Vec<f64> = (0..2000)
            .map(|r| {
                let s = sample_initial(&u, &mut replica_rng(21, r)).unwrap();
                fluctuation(&centered_field(&s, &u).unwrap(), &one, 1).unwrap()
            })
            .collect();
        let summary = crate::stats::summarize(&xs).unwrap();
        // SE of a sample variance from the fourth central moment
        let m4 = xs.iter().map(|x| (x - summary.mean).powi(4)).sum::<f64>() / xs.len() as f64;
        let se = ((m4 - summary.variance.powi(2)) / xs.len() as f64).sqrt();
        assert!((summary.variance - 0.25).abs() < 4.0 * se);
    }

    #[test]
    fn carre_du_champ_small_example() {
        let p = model(KernelSpec::Constant { value: 1.0 }, 4, 1.5, 1);
        let s = SpinConfig::new(*p.lattice(), 1, vec![1, 0, 0, 1]).unwrap();
        let v = carre_du_champ(&s, &p, &[1.0; 4], 1, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn carre_du_champ_vanishes_without_activity() {
        let p = model(KernelSpec::Cosine { beta: 0.5 }, 6, 1.0, 3);
        let s = SpinConfig::new(*p.lattice(), 3, vec![0, 1, 0, 1, 1, 0]).unwrap();
        assert_eq!(carre_du_champ(&s, &p, &[1.0; 6], 3, 3).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn polarization_and_bounds(seed in 0u64..500, fs in prop::collection::vec(-2.0f64..2.0, 12),
                                    gs in prop::collection::vec(-2.0f64..2.0, 12), i in 0usize..3) {
            let p = model(KernelSpec::Cosine { beta: 0.8 }, 12, 0.7, 2);
            let u = DensityField::uniform(*p.lattice(), &[0.3, 0.3, 0.4]).unwrap();
            let s = sample_initial(&u, &mut replica_rng(seed, 0)).unwrap();
            let rates = RateState::from_scratch(&s, &p).unwrap().rates;
            let sum: Vec<f64> = fs.iter().zip(&gs).map(|(a, b)| a + b).collect();
            let gam = |a: &[f64], b: &[f64]| carre_du_champ_with_rates(&s, &rates, a, b, i, i).unwrap();
            let lhs = gam(&sum, &sum) - gam(&fs, &fs) - gam(&gs, &gs);
            prop_assert!((lhs - 2.0 * gam(&fs, &gs)).abs() < 1e-12);
            let ff = gam(&fs, &fs);
            prop_assert!(ff >= 0.0);
            prop_assert!(ff <= (p.a() + p.kernel().norm_inf()) * l2n_norm_sq(&fs) + 1e-12);

            let w = centered_field(&s, &u).unwrap();
            let lin = fluctuation(&w, &sum, i).unwrap();
            let parts = fluctuation(&w, &fs, i).unwrap() + fluctuation(&w, &gs, i).unwrap();
            prop_assert!((lin - parts).abs() < 1e-12);
            prop_assert!(lln_error(&w, &fs, i).unwrap().abs() <= 2.0);
        }
    }
}
