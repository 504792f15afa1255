//! Noise covariance, predicted fluctuation variances, Monte Carlo summaries
//! and log-log rate regression.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hydro::{backward_fp, DensityField, ModelParams, Trajectory};
use crate::lattice::TorusLattice;

/// Per-site `(k+1) x (k+1)` noise covariance, row-major per site.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaField {
    lattice: TorusLattice,
    k: usize,
    values: Vec<f64>,
}

impl GammaField {
    pub fn states(&self) -> usize {
        self.k + 1
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn get(&self, x: usize, i: usize, j: usize) -> f64 {
        let q = self.states();
        self.values[x * q * q + i * q + j]
    }

    pub fn site(&self, x: usize) -> &[f64] {
        let q2 = self.states() * self.states();
        &self.values[x * q2..(x + 1) * q2]
    }

    /// `<gamma_x v, v>`.
    pub fn quad_form(&self, x: usize, v: &[f64]) -> f64 {
        let q = self.states();
        let m = self.site(x);
        (0..q)
            .map(|i| v[i] * (0..q).map(|j| m[i * q + j] * v[j]).sum::<f64>())
            .sum()
    }
}

/// Writes `gamma` for one site. Every jump `i -> i+1 (mod k+1)` at rate
/// `rho_i` adds `rho_i` to both diagonal entries it touches and `-rho_i` to
/// the off-diagonal pair; for `k = 1` both jump types hit the same pair and
/// their contributions add.
fn gamma_site(u: &[f64], field: f64, a: f64, out: &mut [f64]) {
    let q = u.len();
    let k = q - 1;
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..q {
        let rho = if i == k { a * u[k] } else { field * u[i] };
        let j = (i + 1) % q;
        out[i * q + i] += rho;
        out[j * q + j] += rho;
        out[i * q + j] -= rho;
        out[j * q + i] -= rho;
    }
}

pub fn gamma_field(u: &DensityField, p: &ModelParams) -> Result<GammaField> {
    if u.lattice() != p.lattice() || u.k() != p.k() {
        return Err(Error::DimensionMismatch {
            expected: p.lattice().num_sites() * p.states(),
            got: u.values().len(),
        });
    }
    let q = p.states();
    let field = p.kernel().conv(&u.component(p.k()))?;
    let mut values = vec![0.0; u.num_sites() * q * q];
    for (x, out) in values.chunks_exact_mut(q * q).enumerate() {
        gamma_site(u.site(x), field[x], p.a(), out);
    }
    Ok(GammaField {
        lattice: *u.lattice(),
        k: u.k(),
        values,
    })
}

/// Covariance of `X_0(f e_i)` and `X_0(g e_j)` under the product measure.
pub fn predicted_initial_cov(u0: &DensityField, f: &[f64], g: &[f64], i: usize, j: usize) -> Result<f64> {
    let n = u0.num_sites();
    if f.len() != n || g.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.len().min(g.len()),
        });
    }
    let sum: f64 = (0..n)
        .map(|x| {
            let (ui, uj) = (u0.get(x, i), u0.get(x, j));
            let c = if i == j { ui * (1.0 - ui) } else { -ui * uj };
            f[x] * g[x] * c
        })
        .sum();
    Ok(sum / u0.lattice().volume())
}

/// Variance of `X_0(G)` for a site-major vector field `G`:
/// `n^{-d} sum_x (sum_i u^i G_i^2 - (sum_i u^i G_i)^2)`.
pub fn predicted_initial_var_vector(u0: &DensityField, g: &[f64]) -> Result<f64> {
    if g.len() != u0.values().len() {
        return Err(Error::DimensionMismatch {
            expected: u0.values().len(),
            got: g.len(),
        });
    }
    let q = u0.states();
    let sum: f64 = g
        .chunks_exact(q)
        .enumerate()
        .map(|(x, gx)| {
            let u = u0.site(x);
            let m1: f64 = u.iter().zip(gx).map(|(a, b)| a * b).sum();
            let m2: f64 = u.iter().zip(gx).map(|(a, b)| a * b * b).sum();
            m2 - m1 * m1
        })
        .sum();
    Ok(sum / u0.lattice().volume())
}

/// Limiting variance of `X_t(f e_i)` from the mild representation.
///
/// The test function is transported backward along the hydrodynamic
/// trajectory; the initial fluctuation contributes through `P_0 f` and the
/// martingale through the time integral of the `gamma` quadratic form, which
/// is evaluated by the trapezoidal rule on the trajectory grid.
pub fn predicted_variance_mild(f: &[f64], i: usize, traj: &Trajectory, p: &ModelParams) -> Result<f64> {
    let q = p.states();
    let n = p.lattice().num_sites();
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.len(),
        });
    }
    if i >= q {
        return Err(Error::param("state", format!("{i} exceeds k = {}", p.k())));
    }
    let mut terminal = vec![0.0; n * q];
    for (x, fx) in f.iter().enumerate() {
        terminal[x * q + i] = *fx;
    }
    let g = backward_fp(&terminal, traj, p)?;
    let initial = predicted_initial_var_vector(&traj.state(0), g.initial())?;

    let integrand = (0..traj.len())
        .map(|s| {
            let gamma = gamma_field(&traj.state(s), p)?;
            let gs = g.at_index(s);
            let sum: f64 = (0..n).map(|x| gamma.quad_form(x, &gs[x * q..(x + 1) * q])).sum();
            Ok(sum / p.lattice().volume())
        })
        .collect::<Result<Vec<f64>>>()?;
    let h = traj.step();
    let integral: f64 = integrand.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    Ok(initial + integral)
}

/// Least-squares fit of `log error = intercept + slope * log n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 3 points, got {}",
            pairs.len()
        )));
    }
    if let Some((n, e)) = pairs.iter().find(|(n, e)| !(*n > 0.0 && *e > 0.0 && e.is_finite())) {
        return Err(Error::param(
            "error",
            format!("log-log fit needs positive values, got ({n}, {e})"),
        ));
    }
    let points: Vec<(f64, f64)> = pairs.iter().map(|(n, e)| (n.ln(), e.ln())).collect();
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all lattice sizes are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_se = (rss / (m - 2.0) / sxx).sqrt();
    Ok(RateFit {
        points,
        slope,
        intercept,
        slope_se,
    })
}

/// Moments of a Monte Carlo sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub replicas: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Jackknife standard errors, filled by [`normality_diagnostics`].
    pub skewness_se: Option<f64>,
    pub kurtosis_se: Option<f64>,
}

fn central_moments(xs: &[f64], mean: f64) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

pub fn summarize(xs: &[f64]) -> Result<McSummary> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sample"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (m2, m3, m4) = central_moments(xs, mean);
    let variance = m2 * n / (n - 1.0);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(McSummary {
        replicas: xs.len(),
        mean,
        variance,
        std_error: (variance / n).sqrt(),
        skewness,
        excess_kurtosis,
        skewness_se: None,
        kurtosis_se: None,
    })
}

/// Skewness and excess kurtosis with leave-one-out jackknife errors.
///
/// The leave-one-out moments come from power sums of the mean-shifted sample,
/// so the whole jackknife costs one extra pass.
pub fn normality_diagnostics(xs: &[f64]) -> Result<McSummary> {
    if xs.len() < 500 {
        return Err(Error::InsufficientData(format!(
            "normality diagnostics need at least 500 samples, got {}",
            xs.len()
        )));
    }
    let mut s = summarize(xs)?;
    if !(s.variance > 0.0) {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let shift = s.mean;
    let mut p = [0.0f64; 5];
    for x in xs {
        let d = x - shift;
        let mut v = 1.0;
        for pk in p.iter_mut() {
            *pk += v;
            v *= d;
        }
    }
    let n = xs.len() as f64;
    let m = n - 1.0;
    let (mut skews, mut kurts) = (Vec::with_capacity(xs.len()), Vec::with_capacity(xs.len()));
    for x in xs {
        let d = x - shift;
        let (s1, s2, s3, s4) = (
            (p[1] - d) / m,
            (p[2] - d * d) / m,
            (p[3] - d.powi(3)) / m,
            (p[4] - d.powi(4)) / m,
        );
        let c2 = s2 - s1 * s1;
        let c3 = s3 - 3.0 * s1 * s2 + 2.0 * s1.powi(3);
        let c4 = s4 - 4.0 * s1 * s3 + 6.0 * s1 * s1 * s2 - 3.0 * s1.powi(4);
        skews.push(c3 / c2.powf(1.5));
        kurts.push(c4 / (c2 * c2) - 3.0);
    }
    let jack_se = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / n;
        ((n - 1.0) / n * v.iter().map(|t| (t - mean).powi(2)).sum::<f64>()).sqrt()
    };
    s.skewness_se = Some(jack_se(&skews));
    s.kurtosis_se = Some(jack_se(&kurts));
    Ok(s)
}

/// Sample covariance and its standard error.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let cov = prods.iter().sum::<f64>() / (nf - 1.0);
    let mean_p = prods.iter().sum::<f64>() / nf;
    let var_p = prods.iter().map(|p| (p - mean_p).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok((cov, (var_p / nf).sqrt()))
}

/// Standard error of the unbiased sample variance.
pub fn variance_se(xs: &[f64]) -> Result<f64> {
    covariance(xs, xs).map(|(_, se)| se)
}
