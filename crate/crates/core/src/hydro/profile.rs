use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::model::DensityField;
use crate::error::{Error, Result};
use crate::lattice::TorusLattice;

/// Smooth initial profile `u0: T^d -> simplex`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// The same probability vector everywhere.
    Constant { probs: Vec<f64> },
    /// `u0^i(x) = base_i + amplitude_i * phi(x)` with
    /// `phi(x) = d^{-1} sum_j cos(2 pi mode x_j)`. The amplitudes must sum to zero.
    Cosine {
        base: Vec<f64>,
        amplitude: Vec<f64>,
        #[serde(default = "default_mode")]
        mode: u32,
    },
}

fn default_mode() -> u32 {
    1
}

impl InitialProfile {
    pub fn states(&self) -> usize {
        match self {
            InitialProfile::Constant { probs } => probs.len(),
            InitialProfile::Cosine { base, .. } => base.len(),
        }
    }

    /// Evaluates the profile at a macroscopic point.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            InitialProfile::Constant { probs } => probs.clone(),
            InitialProfile::Cosine {
                base,
                amplitude,
                mode,
            } => {
                let phi = x
                    .iter()
                    .map(|xj| (2.0 * PI * f64::from(*mode) * xj).cos())
                    .sum::<f64>()
                    / x.len() as f64;
                base.iter().zip(amplitude).map(|(b, a)| b + a * phi).collect()
            }
        }
    }

    /// Smallest and largest component over the torus.
    pub fn range(&self) -> (f64, f64) {
        match self {
            InitialProfile::Constant { probs } => (
                probs.iter().copied().fold(f64::INFINITY, f64::min),
                probs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            InitialProfile::Cosine {
                base, amplitude, ..
            } => base.iter().zip(amplitude).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), (b, a)| (lo.min(b - a.abs()), hi.max(b + a.abs())),
            ),
        }
    }

    /// Violations of the regularity and interior hypothesis: components must
    /// stay within `[epsilon, 1 - epsilon]` and sum to one.
    pub fn violations(&self, epsilon: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(epsilon > 0.0 && epsilon < 0.5) {
            out.push(format!("epsilon must lie in (0, 1/2), got {epsilon}"));
        }
        if self.states() < 2 {
            out.push("profile needs at least two states".into());
            return out;
        }
        match self {
            InitialProfile::Constant { probs } => {
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    out.push(format!("probabilities sum to {s}"));
                }
            }
            InitialProfile::Cosine {
                base,
                amplitude,
                mode,
            } => {
                if amplitude.len() != base.len() {
                    out.push(format!(
                        "amplitude has {} entries, base has {}",
                        amplitude.len(),
                        base.len()
                    ));
                    return out;
                }
                let s: f64 = base.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    out.push(format!("base sums to {s}"));
                }
                let sa: f64 = amplitude.iter().sum();
                if sa.abs() > 1e-12 {
                    out.push(format!("amplitudes sum to {sa}, must be 0"));
                }
                if *mode == 0 {
                    out.push("mode must be positive".into());
                }
            }
        }
        let (lo, hi) = self.range();
        if !(lo.is_finite() && hi.is_finite()) || lo < epsilon || hi > 1.0 - epsilon {
            out.push(format!(
                "components range over [{lo}, {hi}], outside [{epsilon}, {}]",
                1.0 - epsilon
            ));
        }
        out
    }

    /// The lattice profile `x -> u0(x / n)`.
    pub fn on_lattice(&self, lattice: TorusLattice) -> Result<DensityField> {
        let k = self
            .states()
            .checked_sub(1)
            .filter(|k| *k >= 1)
            .ok_or_else(|| Error::param("profile", "need at least two states"))?;
        let values = lattice.points().flat_map(|p| self.eval(&p)).collect();
        DensityField::new(lattice, k, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine() -> InitialProfile {
        InitialProfile::Cosine {
            base: vec![0.4, 0.3, 0.3],
            amplitude: vec![0.1, -0.05, -0.05],
            mode: 1,
        }
    }

    #[test]
    fn cosine_profile_stays_on_simplex() {
        let p = cosine();
        assert!(p.violations(0.05).is_empty());
        let u = p.on_lattice(TorusLattice::new(2, 8).unwrap()).unwrap();
        assert!(u.simplex_defect() < 1e-15);
        assert!((u.min_component() - 0.25).abs() < 1e-12);
        assert!((u.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interior_violations_reported() {
        let zero = InitialProfile::Constant {
            probs: vec![0.0, 1.0],
        };
        assert!(!zero.violations(0.01).is_empty());
        let unbalanced = InitialProfile::Cosine {
            base: vec![0.5, 0.5],
            amplitude: vec![0.1, 0.1],
            mode: 1,
        };
        assert!(unbalanced
            .violations(0.01)
            .iter()
            .any(|v| v.contains("amplitudes")));
        assert!(cosine().violations(0.3).iter().any(|v| v.contains("range")));
    }

    #[test]
    fn parses_from_toml() {
        let p: InitialProfile =
            toml::from_str("kind = \"cosine\"\nbase = [0.5, 0.5]\namplitude = [0.2, -0.2]\n")
                .unwrap();
        assert_eq!(
            p,
            InitialProfile::Cosine {
                base: vec![0.5, 0.5],
                amplitude: vec![0.2, -0.2],
                mode: 1
            }
        );
    }
}
