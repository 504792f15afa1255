use rand::Rng;

use crate::error::{Error, Result};
use crate::hydro::DensityField;
use crate::lattice::TorusLattice;

/// A lattice configuration `sigma in {0..k}^{T_n^d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    lattice: TorusLattice,
    k: u8,
    states: Vec<u8>,
}

impl SpinConfig {
    pub fn new(lattice: TorusLattice, k: usize, states: Vec<u8>) -> Result<Self> {
        let k = u8::try_from(k)
            .ok()
            .filter(|k| *k >= 1 && *k < u8::MAX)
            .ok_or_else(|| Error::param("k", format!("threshold must be in 1..=254, got {k}")))?;
        if states.len() != lattice.num_sites() {
            return Err(Error::DimensionMismatch {
                expected: lattice.num_sites(),
                got: states.len(),
            });
        }
        if let Some(s) = states.iter().find(|s| **s > k) {
            return Err(Error::param("states", format!("state {s} exceeds k = {k}")));
        }
        Ok(Self { lattice, k, states })
    }

    pub fn filled(lattice: TorusLattice, k: usize, state: u8) -> Result<Self> {
        Self::new(lattice, k, vec![state; lattice.num_sites()])
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    #[inline]
    pub fn k(&self) -> usize {
        usize::from(self.k)
    }

    #[inline]
    pub fn num_sites(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn get(&self, x: usize) -> u8 {
        self.states[x]
    }

    pub fn states(&self) -> &[u8] {
        &self.states
    }

    #[inline]
    pub fn is_active(&self, x: usize) -> bool {
        self.states[x] == self.k
    }

    /// Advances site `x` one step around the ring `0 -> 1 -> ... -> k -> 0`.
    #[inline]
    pub(crate) fn advance(&mut self, x: usize) -> (u8, u8) {
        let old = self.states[x];
        let new = if old == self.k { 0 } else { old + 1 };
        self.states[x] = new;
        (old, new)
    }

    /// Number of sites in each state.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k() + 1];
        for &s in &self.states {
            c[usize::from(s)] += 1;
        }
        c
    }

    pub fn active_sites(&self) -> Vec<usize> {
        (0..self.states.len()).filter(|&x| self.is_active(x)).collect()
    }

    /// The occupation field `x -> 1(sigma_x = i)`.
    pub fn indicator(&self, i: usize) -> Vec<f64> {
        self.states
            .iter()
            .map(|&s| if usize::from(s) == i { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Draws a configuration from the product measure with site marginals `u0`.
pub fn sample_initial<R: Rng + ?Sized>(u0: &DensityField, rng: &mut R) -> Result<SpinConfig> {
    u0.check_simplex()?;
    let k = u0.k();
    let states = (0..u0.num_sites())
        .map(|x| {
            let r: f64 = rng.random();
            let mut acc = 0.0;
            let site = u0.site(x);
            for (i, p) in site.iter().enumerate() {
                acc += p;
                if r < acc {
                    return i as u8;
                }
            }
            // rounding slack: last state with positive mass
            site.iter().rposition(|p| *p > 0.0).unwrap_or(k) as u8
        })
        .collect();
    SpinConfig::new(*u0.lattice(), k, states)
}
