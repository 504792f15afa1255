//! Periodic lattice geometry.
//!
//! Sites of the discrete torus of side `n` in dimension `d` are indexed in
//! row-major order: the last coordinate varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusLattice {
    dim: usize,
    side: usize,
    sites: usize,
}

impl TorusLattice {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidLattice("dimension must be positive".into()));
        }
        if side == 0 {
            return Err(Error::InvalidLattice("side length must be positive".into()));
        }
        let sites = u32::try_from(dim)
            .ok()
            .and_then(|d| side.checked_pow(d))
            .ok_or_else(|| Error::InvalidLattice(format!("{side}^{dim} sites overflow")))?;
        Ok(Self { dim, side, sites })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of sites, `n^d`.
    #[inline]
    pub fn num_sites(&self) -> usize {
        self.sites
    }

    /// The lattice volume `n^d` as a float, used for `n^{-d}` normalisations.
    #[inline]
    pub fn volume(&self) -> f64 {
        self.sites as f64
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        debug_assert!(index < self.sites);
        let mut out = vec![0; self.dim];
        for c in out.iter_mut().rev() {
            *c = index % self.side;
            index /= self.side;
        }
        out
    }

    /// Row-major index of a coordinate tuple. Coordinates are wrapped modulo `n`.
    pub fn index(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let n = self.side as i64;
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(n) as usize)
    }

    /// Macroscopic position `x / n` in the unit torus.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let n = self.side as f64;
        self.coords(index).into_iter().map(|c| c as f64 / n).collect()
    }

    /// Iterator over the macroscopic positions of all sites, in index order.
    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.sites).map(move |i| self.point(i))
    }

    /// Index of the site obtained by shifting `index` by `offset` with periodic wrap.
    pub fn translate(&self, index: usize, offset: &[i64]) -> usize {
        let shifted: Vec<i64> = self
            .coords(index)
            .into_iter()
            .zip(offset)
            .map(|(c, &o)| c as i64 + o)
            .collect();
        self.index(&shifted)
    }

    /// Site of this lattice corresponding to site `index` of `coarse`, when
    /// the side of `coarse` divides ours.
    pub fn embed_from(&self, coarse: &TorusLattice, index: usize) -> Result<usize> {
        if coarse.dim != self.dim || coarse.side == 0 || self.side % coarse.side != 0 {
            return Err(Error::InvalidLattice(format!(
                "side {} does not refine side {}",
                self.side, coarse.side
            )));
        }
        let ratio = (self.side / coarse.side) as i64;
        let c: Vec<i64> = coarse
            .coords(index)
            .into_iter()
            .map(|c| c as i64 * ratio)
            .collect();
        Ok(self.index(&c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_empty_lattices() {
        assert!(TorusLattice::new(0, 4).is_err());
        assert!(TorusLattice::new(1, 0).is_err());
    }

    #[test]
    fn row_major_layout() {
        let l = TorusLattice::new(2, 3).unwrap();
        assert_eq!(l.num_sites(), 9);
        assert_eq!(l.coords(5), vec![1, 2]);
        assert_eq!(l.index(&[1, 2]), 5);
        assert_eq!(l.index(&[-1, 3]), l.index(&[2, 0]));
        assert_eq!(l.point(5), vec![1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn embedding_into_finer_lattice() {
        let fine = TorusLattice::new(1, 8).unwrap();
        let coarse = TorusLattice::new(1, 4).unwrap();
        assert_eq!(fine.embed_from(&coarse, 3).unwrap(), 6);
        let odd = TorusLattice::new(1, 3).unwrap();
        assert!(fine.embed_from(&odd, 1).is_err());
    }

    proptest! {
        #[test]
        fn index_and_coords_are_inverse(dim in 1usize..4, side in 1usize..7, seed in 0usize..10_000) {
            let l = TorusLattice::new(dim, side).unwrap();
            let i = seed % l.num_sites();
            let c: Vec<i64> = l.coords(i).into_iter().map(|c| c as i64).collect();
            prop_assert!(c.iter().all(|&x| x >= 0 && (x as usize) < side));
            prop_assert_eq!(l.index(&c), i);
        }
    }
}
