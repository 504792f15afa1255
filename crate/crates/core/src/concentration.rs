//! Monte Carlo checks of the sub-Gaussian tools: Hoeffding's bound, the
//! quadratic exponential moment, Hanson–Wright and Donsker–Varadhan.
//!
//! Every check is one-sided with a slack of four standard errors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of draws for an exponential-moment estimate.
pub const MIN_REPLICAS: usize = 10_000;

/// Monte Carlo slack in standard errors.
pub const SLACK_SE: f64 = 4.0;

/// Centered bounded real variables with known range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampler {
    /// `1(U < p) - p`, the centered occupation variable.
    CenteredIndicator { p: f64 },
    /// `+1` or `-1` with equal probability.
    Rademacher,
    Zero,
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

impl Sampler {
    pub fn name(&self) -> String {
        match self {
            Sampler::CenteredIndicator { p } => format!("indicator({p})"),
            Sampler::Rademacher => "rademacher".into(),
            Sampler::Zero => "zero".into(),
            Sampler::Uniform { half_width } => format!("uniform({half_width})"),
        }
    }

    /// Declared support `[-b, a - b]`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Sampler::CenteredIndicator { p } => (-p, 1.0 - p),
            Sampler::Rademacher => (-1.0, 1.0),
            Sampler::Zero => (0.0, 0.0),
            Sampler::Uniform { half_width } => (-half_width, half_width),
        }
    }

    /// Length `a` of the support.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self.range();
        hi - lo
    }

    /// Hoeffding's bound on `||X||_{psi_2}^2`, namely `a^2 / 4`.
    pub fn psi2_sq_bound(&self) -> f64 {
        self.oscillation().powi(2) / 4.0
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Sampler::CenteredIndicator { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::param("p", format!("must lie in [0, 1], got {p}")))
            }
            Sampler::Uniform { half_width } if !(half_width >= 0.0 && half_width.is_finite()) => {
                Err(Error::param("half_width", format!("must be finite and >= 0, got {half_width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Sampler::CenteredIndicator { p } => f64::from(u8::from(rng.random::<f64>() < p)) - p,
            Sampler::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Sampler::Zero => 0.0,
            Sampler::Uniform { half_width } => (2.0 * rng.random::<f64>() - 1.0) * half_width,
        }
    }

    fn draw_checked<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let v = self.sample(rng);
        let (lo, hi) = self.range();
        if !(lo..=hi).contains(&v) {
            return Err(Error::OutOfRange { value: v, lo, hi });
        }
        Ok(v)
    }

    fn draws<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        (0..n).map(|_| self.draw_checked(rng)).collect()
    }
}

/// Joint law of one `(X_i, Y_i)` pair; pairs are independent across `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PairSampler {
    Independent { x: Sampler, y: Sampler },
    /// `Y_i = X_i`.
    Identical { x: Sampler },
    /// `(1(s = i) - p_i, 1(s = j) - p_j)` for a categorical `s ~ probs`.
    Occupation { probs: Vec<f64>, i: usize, j: usize },
}

impl PairSampler {
    /// Sub-Gaussian indices `(sigma^2, sigma~^2)` from Hoeffding's bound.
    pub fn indices(&self) -> (f64, f64) {
        match self {
            PairSampler::Independent { x, y } => (x.psi2_sq_bound(), y.psi2_sq_bound()),
            PairSampler::Identical { x } => (x.psi2_sq_bound(), x.psi2_sq_bound()),
            PairSampler::Occupation { .. } => (0.25, 0.25),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64)> {
        match self {
            PairSampler::Independent { x, y } => Ok((x.draw_checked(rng)?, y.draw_checked(rng)?)),
            PairSampler::Identical { x } => {
                let v = x.draw_checked(rng)?;
                Ok((v, v))
            }
            PairSampler::Occupation { probs, i, j } => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                let s = probs
                    .iter()
                    .position(|p| {
                        acc += p;
                        r < acc
                    })
                    .unwrap_or(probs.len() - 1);
                let w = |t: usize| f64::from(u8::from(s == t)) - probs[t];
                Ok((w(*i), w(*j)))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PairSampler::Independent { x, y } => x.validate().and(y.validate()),
            PairSampler::Identical { x } => x.validate(),
            PairSampler::Occupation { probs, i, j } => {
                let s: f64 = probs.iter().sum();
                if probs.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-12 {
                    return Err(Error::param("probs", "must be a probability vector"));
                }
                if *i >= probs.len() || *j >= probs.len() {
                    return Err(Error::param("probs", "state index out of range"));
                }
                Ok(())
            }
        }
    }
}

/// Outcome of one inequality check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub check: String,
    pub sampler: String,
    /// The `theta` or `gamma` at which the check was made.
    pub parameter: f64,
    pub empirical: f64,
    pub threshold: f64,
    pub std_error: f64,
    pub pass: bool,
}

impl InequalityCheck {
    fn new(check: &str, sampler: String, parameter: f64, empirical: f64, threshold: f64, se: f64) -> Self {
        let pass = empirical <= threshold + SLACK_SE * se;
        Self {
            check: check.into(),
            sampler,
            parameter,
            empirical,
            threshold,
            std_error: se,
            pass,
        }
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `log E[e^{theta X}]` and its delta-method standard error.
fn log_mgf(xs: &[f64], theta: f64) -> (f64, f64) {
    let e: Vec<f64> = xs.iter().map(|x| (theta * x).exp()).collect();
    let (m, se) = mean_and_se(&e);
    (m.ln(), se / m)
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas < MIN_REPLICAS {
        return Err(Error::param(
            "replicas",
            format!("exponential moments need at least {MIN_REPLICAS} draws, got {replicas}"),
        ));
    }
    Ok(())
}

/// `count` log-spaced values in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// The default `theta` grid: log-spaced on `[0.1, 4]`.
pub fn default_thetas() -> Vec<f64> {
    log_grid(0.1, 4.0, 12)
}

/// `log E[e^{theta X}] <= theta^2 a^2 / 8` at `+theta` and `-theta`.
pub fn check_hoeffding<R: Rng + ?Sized>(
    sampler: &Sampler,
    thetas: &[f64],
    replicas: usize,
    rng: &mut R,
) -> Result<Vec<InequalityCheck>> {
    check_replicas(replicas)?;
    let xs = sampler.draws(replicas, rng)?;
    let a2 = sampler.oscillation().powi(2);
    let mut out = Vec::with_capacity(2 * thetas.len());
    for &t in thetas {
        for theta in [t, -t] {
            let (lm, se) = log_mgf(&xs, theta);
            out.push(InequalityCheck::new(
                "hoeffding",
                sampler.name(),
                theta,
                lm,
                theta * theta * a2 / 8.0,
                se,
            ));
        }
    }
    Ok(out)
}

/// `E[e^{gamma X^2}] <= 3` at `gamma = 1 / (4 (a/2)^2)`.
pub fn check_quad<R: Rng + ?Sized>(sampler: &Sampler, replicas: usize, rng: &mut R) -> Result<InequalityCheck> {
    check_replicas(replicas)?;
    let xs = sampler.draws(replicas, rng)?;
    let psi2 = sampler.psi2_sq_bound();
    // a degenerate variable satisfies the bound at every gamma
    let gamma = if psi2 > 0.0 { 1.0 / (4.0 * psi2) } else { 1.0 };
    let e: Vec<f64> = xs.iter().map(|x| (gamma * x * x).exp()).collect();
    let (m, se) = mean_and_se(&e);
    Ok(InequalityCheck::new("quadratic", sampler.name(), gamma, m, 3.0, se))
}

/// Square matrix with zero diagonal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    size: usize,
    values: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                got: values.len(),
            });
        }
        if let Some(i) = (0..size).find(|&i| values[i * size + i] != 0.0) {
            return Err(Error::param("g", format!("diagonal entry ({i},{i}) must be zero")));
        }
        Ok(Self { size, values })
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            values: vec![0.0; size * size],
        }
    }

    /// Independent `+-1` entries off the diagonal.
    pub fn random_signs<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let values = (0..size * size)
            .map(|idx| {
                if idx / size == idx % size {
                    0.0
                } else if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Self { size, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }
}

/// `gamma = (1024 sum_{i != j} sigma_i^2 sigma~_j^2 g_ij^2)^{-1/2}`.
pub fn hanson_wright_gamma(g: &CoefficientMatrix, pairs: &PairSampler) -> f64 {
    let (s, st) = pairs.indices();
    let sum: f64 = g.values.iter().map(|v| v * v).sum::<f64>() * s * st;
    if sum > 0.0 {
        (1024.0 * sum).powf(-0.5)
    } else {
        f64::INFINITY
    }
}

/// `E[exp(gamma sum_{i != j} g_ij X_i Y_j)] <= 3` at the threshold `gamma`.
pub fn check_hanson_wright<R: Rng + ?Sized>(
    g: &CoefficientMatrix,
    pairs: &PairSampler,
    replicas: usize,
    rng: &mut R,
) -> Result<InequalityCheck> {
    check_replicas(replicas)?;
    pairs.validate()?;
    let n = g.size;
    let gamma = hanson_wright_gamma(g, pairs);
    let mut xs = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut vals = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        for i in 0..n {
            (xs[i], ys[i]) = pairs.sample(rng)?;
        }
        let mut form = 0.0;
        for i in 0..n {
            for j in 0..n {
                form += g.get(i, j) * xs[i] * ys[j];
            }
        }
        // with g = 0 the threshold is unbounded and the form is exactly 0
        let arg = if form == 0.0 { 0.0 } else { gamma * form };
        vals.push(arg.exp());
    }
    let (m, se) = mean_and_se(&vals);
    let name = match pairs {
        PairSampler::Independent { x, y } => format!("{}x{}", x.name(), y.name()),
        PairSampler::Identical { x } => format!("{}={}", x.name(), x.name()),
        PairSampler::Occupation { i, j, .. } => format!("occupation({i},{j})"),
    };
    Ok(InequalityCheck::new("hanson-wright", name, gamma, m, 3.0, se))
}

/// Sum property of the sub-Gaussian norm: `log E[e^{theta (X + Y)}] <= theta^2 (psi(X)^2 + psi(Y)^2) / 2`
/// with Hoeffding's bounds in place of the norms.
pub fn check_psi2_sum<R: Rng + ?Sized>(
    x: &Sampler,
    y: &Sampler,
    thetas: &[f64],
    replicas: usize,
    rng: &mut R,
) -> Result<Vec<InequalityCheck>> {
    check_replicas(replicas)?;
    let xs = x.draws(replicas, rng)?;
    let ys = y.draws(replicas, rng)?;
    let sums: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a + b).collect();
    let budget = x.psi2_sq_bound() + y.psi2_sq_bound();
    Ok(thetas
        .iter()
        .map(|&theta| {
            let (lm, se) = log_mgf(&sums, theta);
            InequalityCheck::new(
                "psi2-sum",
                format!("{}+{}", x.name(), y.name()),
                theta,
                lm,
                0.5 * theta * theta * budget,
                se,
            )
        })
        .collect())
}

/// Both sides of the entropy inequality
/// `int g f dmu <= gamma^{-1} (int f log f dmu + log int e^{gamma g} dmu)`
/// on a finite space.
pub fn donsker_varadhan(mu: &[f64], f: &[f64], g: &[f64], gamma: f64) -> Result<(f64, f64)> {
    if mu.len() != f.len() || mu.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: f.len().min(g.len()),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", "must be positive"));
    }
    let mass: f64 = mu.iter().zip(f).map(|(m, d)| m * d).sum();
    if (mass - 1.0).abs() > 1e-12 || f.iter().any(|d| *d < 0.0) {
        return Err(Error::param("f", "must be a probability density with respect to mu"));
    }
    let lhs: f64 = mu.iter().zip(f).zip(g).map(|((m, d), v)| m * d * v).sum();
    let ent: f64 = mu
        .iter()
        .zip(f)
        .filter(|(_, d)| **d > 0.0)
        .map(|(m, d)| m * d * d.ln())
        .sum();
    let mgf: f64 = mu.iter().zip(g).map(|(m, v)| m * (gamma * v).exp()).sum();
    Ok((lhs, (ent + mgf.ln()) / gamma))
}

/// The standard battery: Hoeffding and the quadratic moment for several
/// samplers, Hanson–Wright on random sign matrices, the sum property and the
/// two-point entropy inequality.
pub fn run_suite<R: Rng + ?Sized>(replicas: usize, rng: &mut R) -> Result<Vec<InequalityCheck>> {
    let samplers = [
        Sampler::Zero,
        Sampler::CenteredIndicator { p: 0.5 },
        Sampler::CenteredIndicator { p: 0.2 },
        Sampler::Rademacher,
        Sampler::Uniform { half_width: 1.0 },
    ];
    let thetas = default_thetas();
    let mut out = Vec::new();
    for s in &samplers {
        out.extend(check_hoeffding(s, &thetas, replicas, rng)?);
        out.push(check_quad(s, replicas, rng)?);
    }
    let rad = Sampler::Rademacher;
    let pair_laws = [
        PairSampler::Independent { x: rad, y: rad },
        PairSampler::Identical { x: rad },
        PairSampler::Occupation {
            probs: vec![0.3, 0.3, 0.4],
            i: 1,
            j: 2,
        },
    ];
    out.push(check_hanson_wright(
        &CoefficientMatrix::zeros(8),
        &pair_laws[0],
        replicas,
        rng,
    )?);
    for pairs in &pair_laws {
        let g = CoefficientMatrix::random_signs(8, rng);
        out.push(check_hanson_wright(&g, pairs, replicas, rng)?);
    }
    out.extend(check_psi2_sum(
        &Sampler::CenteredIndicator { p: 0.3 },
        &rad,
        &thetas,
        replicas,
        rng,
    )?);
    let (mu, f, g) = ([0.3, 0.7], [2.0, 4.0 / 7.0], [1.5, -0.5]);
    for gamma in [0.5, 1.0, 2.0] {
        let (lhs, rhs) = donsker_varadhan(&mu, &f, &g, gamma)?;
        out.push(InequalityCheck::new(
            "donsker-varadhan",
            "two-point".into(),
            gamma,
            lhs,
            rhs,
            0.0,
        ));
    }
    Ok(out)
}
