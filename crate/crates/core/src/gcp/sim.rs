use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::config::SpinConfig;
use super::fenwick::Fenwick;
use crate::error::{Error, Result};
use crate::hydro::ModelParams;

/// Events between full from-scratch rebuilds of the rate bookkeeping.
pub const REBUILD_PERIOD: u64 = 1 << 20;

/// Per-site intensities `I_x = (J^n * 1(sigma = k))_x`, rates `c_x` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RateState {
    pub intensity: Vec<f64>,
    pub rates: Vec<f64>,
    pub total: f64,
}

impl RateState {
    /// Direct evaluation of the rate table, used as the integrity reference.
    pub fn from_scratch(config: &SpinConfig, p: &ModelParams) -> Result<Self> {
        check_shapes(config, p)?;
        let intensity = p.kernel().conv(&config.indicator(p.k()))?;
        let rates: Vec<f64> = (0..config.num_sites())
            .map(|x| site_rate(config, x, intensity[x], p.a()))
            .collect();
        let total = rates.iter().sum();
        Ok(Self {
            intensity,
            rates,
            total,
        })
    }

    /// Largest deviation from `other`, relative to the larger total rate.
    pub fn max_relative_deviation(&self, other: &RateState) -> f64 {
        let scale = self.total.abs().max(other.total.abs()).max(f64::MIN_POSITIVE);
        let fields = self
            .intensity
            .iter()
            .zip(&other.intensity)
            .chain(self.rates.iter().zip(&other.rates))
            .map(|(a, b)| (a - b).abs())
            .fold((self.total - other.total).abs(), f64::max);
        fields / scale
    }
}

#[inline]
fn site_rate(config: &SpinConfig, x: usize, intensity: f64, a: f64) -> f64 {
    if config.is_active(x) {
        a
    } else {
        intensity
    }
}

fn check_shapes(config: &SpinConfig, p: &ModelParams) -> Result<()> {
    if config.lattice() != p.lattice() {
        return Err(Error::InvalidLattice(
            "configuration and kernel live on different lattices".into(),
        ));
    }
    if config.k() != p.k() {
        return Err(Error::param(
            "k",
            format!("configuration has k = {}, model has k = {}", config.k(), p.k()),
        ));
    }
    Ok(())
}

/// How the next firing site is located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    /// Constant kernels use the partition engine, everything else the tree.
    #[default]
    Auto,
    /// Binary indexed tree over site rates; valid for every kernel.
    Tree,
    /// Active/passive partition; valid only when every off-diagonal entry of
    /// `J^n` is the same constant, so `I_x` depends on the active count alone.
    Constant,
}

#[derive(Debug, Clone)]
enum Engine {
    Tree {
        intensity: Vec<f64>,
        rates: Vec<f64>,
        tree: Fenwick,
        column: Vec<f64>,
    },
    Constant {
        value: f64,
        // active sites occupy order[..active], passive ones the rest
        order: Vec<usize>,
        position: Vec<usize>,
        active: usize,
    },
}

/// Outcome of a single call to [`Simulation::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Fired { site: usize, time: f64, holding: f64 },
    /// No active site remains; the total rate is zero forever after.
    Absorbed,
}

/// What a snapshot keeps besides the per-state counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnapshotMode {
    #[default]
    Counts,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub counts: Vec<usize>,
    pub config: Option<SpinConfig>,
}

/// Exact event-driven simulation of one replica.
///
/// Randomness is consumed in a fixed pattern: an `Exp(1)` variate is drawn the
/// first time the next event time is needed after a state change, and a
/// uniform variate selects the firing site when that event is executed.
/// Observation times never consume randomness, so a run stopped at `t` and
/// continued to `t'` is bit-identical to a single run to `t'`.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: ModelParams,
    config: SpinConfig,
    engine: Engine,
    time: f64,
    next_event: Option<f64>,
    events: u64,
    since_rebuild: u64,
    jumps: Vec<u32>,
}

impl Simulation {
    pub fn new(config: SpinConfig, params: ModelParams) -> Result<Self> {
        Self::with_engine(config, params, EngineKind::Auto)
    }

    pub fn with_engine(config: SpinConfig, params: ModelParams, kind: EngineKind) -> Result<Self> {
        check_shapes(&config, &params)?;
        let constant = params.kernel().constant_value();
        let engine = match (kind, constant) {
            (EngineKind::Constant, None) => {
                return Err(Error::param(
                    "engine",
                    "the partition engine needs a constant kernel",
                ))
            }
            (EngineKind::Auto | EngineKind::Constant, Some(value)) => {
                Self::constant_engine(&config, value)
            }
            (EngineKind::Tree, _) | (EngineKind::Auto, None) => {
                let rs = RateState::from_scratch(&config, &params)?;
                Engine::Tree {
                    tree: Fenwick::from_values(&rs.rates),
                    intensity: rs.intensity,
                    rates: rs.rates,
                    column: vec![0.0; config.num_sites()],
                }
            }
        };
        let jumps = vec![0; config.num_sites()];
        Ok(Self {
            params,
            config,
            engine,
            time: 0.0,
            next_event: None,
            events: 0,
            since_rebuild: 0,
            jumps,
        })
    }

    fn constant_engine(config: &SpinConfig, value: f64) -> Engine {
        let n = config.num_sites();
        let mut order: Vec<usize> = (0..n).filter(|&x| config.is_active(x)).collect();
        let active = order.len();
        order.extend((0..n).filter(|&x| !config.is_active(x)));
        let mut position = vec![0; n];
        for (pos, &x) in order.iter().enumerate() {
            position[x] = pos;
        }
        Engine::Constant {
            value,
            order,
            position,
            active,
        }
    }

    pub fn config(&self) -> &SpinConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Number of times each site has fired since construction.
    pub fn jump_counts(&self) -> &[u32] {
        &self.jumps
    }

    pub fn engine_kind(&self) -> EngineKind {
        match self.engine {
            Engine::Tree { .. } => EngineKind::Tree,
            Engine::Constant { .. } => EngineKind::Constant,
        }
    }

    pub fn active_count(&self) -> usize {
        match &self.engine {
            Engine::Constant { active, .. } => *active,
            Engine::Tree { .. } => self.config.states().iter().filter(|&&s| usize::from(s) == self.params.k()).count(),
        }
    }

    pub fn is_absorbed(&self) -> bool {
        self.active_count() == 0
    }

    /// Total jump rate `R` of the current configuration.
    pub fn total_rate(&self) -> f64 {
        match &self.engine {
            Engine::Tree { tree, .. } => tree.total(),
            Engine::Constant { value, active, .. } => {
                let n = self.config.num_sites();
                let a = *active as f64;
                self.params.a() * a + (n - active) as f64 * value * a / self.config.lattice().volume()
            }
        }
    }

    /// The incrementally maintained rate bookkeeping.
    pub fn rate_state(&self) -> RateState {
        match &self.engine {
            Engine::Tree {
                intensity,
                rates,
                tree,
                ..
            } => RateState {
                intensity: intensity.clone(),
                rates: rates.clone(),
                total: tree.total(),
            },
            Engine::Constant { value, active, .. } => {
                let vol = self.config.lattice().volume();
                let intensity: Vec<f64> = (0..self.config.num_sites())
                    .map(|x| {
                        let others = *active - usize::from(self.config.is_active(x));
                        value * others as f64 / vol
                    })
                    .collect();
                let rates = (0..self.config.num_sites())
                    .map(|x| site_rate(&self.config, x, intensity[x], self.params.a()))
                    .collect();
                RateState {
                    intensity,
                    rates,
                    total: self.total_rate(),
                }
            }
        }
    }

    /// Relative deviation of the maintained rates from a fresh computation.
    pub fn integrity_defect(&self) -> Result<f64> {
        let fresh = RateState::from_scratch(&self.config, &self.params)?;
        Ok(self.rate_state().max_relative_deviation(&fresh))
    }

    fn rebuild(&mut self) -> Result<()> {
        if let Engine::Tree {
            intensity,
            rates,
            tree,
            ..
        } = &mut self.engine
        {
            let rs = RateState::from_scratch(&self.config, &self.params)?;
            *intensity = rs.intensity;
            *rates = rs.rates;
            tree.rebuild(rates);
        }
        self.since_rebuild = 0;
        Ok(())
    }

    /// Absolute time of the next event, drawing its holding variate if needed.
    fn next_event_time<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Some(t) = self.next_event {
            return t;
        }
        let total = self.total_rate();
        let t = if total > 0.0 {
            let e: f64 = rng.sample(Exp1);
            self.time + e / total
        } else {
            f64::INFINITY
        };
        self.next_event = Some(t);
        t
    }

    fn select_site(&self, target: f64) -> usize {
        match &self.engine {
            Engine::Tree { tree, rates, .. } => {
                let x = tree.find(target);
                if rates[x] > 0.0 {
                    x
                } else {
                    // rounding pushed the search onto a silent site
                    rates.iter().rposition(|r| *r > 0.0).unwrap_or(x)
                }
            }
            Engine::Constant {
                value,
                order,
                active,
                ..
            } => {
                let n = order.len();
                let a_mass = self.params.a() * *active as f64;
                if target < a_mass || *active == n {
                    let i = ((target / self.params.a()) as usize).min(active - 1);
                    order[i]
                } else {
                    let passive_rate = value * *active as f64 / self.config.lattice().volume();
                    let i = ((target - a_mass) / passive_rate) as usize;
                    order[(*active + i).min(n - 1)]
                }
            }
        }
    }

    fn fire(&mut self, x: usize) {
        let k = self.params.k() as u8;
        let (old, new) = self.config.advance(x);
        self.jumps[x] += 1;
        self.events += 1;
        self.since_rebuild += 1;
        let toggled = old == k || new == k;
        if !toggled {
            // passive to passive: I_x and c_x are unchanged
            return;
        }
        let inv = 1.0 / self.config.lattice().volume();
        let a = self.params.a();
        let now_active = new == k;
        match &mut self.engine {
            Engine::Tree {
                intensity,
                rates,
                tree,
                column,
            } => {
                let sign = if now_active { inv } else { -inv };
                self.params.kernel().column_into(x, column);
                for (y, j) in column.iter().enumerate() {
                    intensity[y] += sign * j;
                }
                let any_active = self.config.states().iter().any(|&s| s == k);
                if !any_active {
                    intensity.iter_mut().for_each(|v| *v = 0.0);
                }
                for (y, r) in rates.iter_mut().enumerate() {
                    *r = if self.config.is_active(y) { a } else { intensity[y] };
                }
                tree.rebuild(rates);
            }
            Engine::Constant {
                order,
                position,
                active,
                ..
            } => {
                let pos = position[x];
                let swap_with = if now_active { *active } else { *active - 1 };
                let other = order[swap_with];
                order.swap(pos, swap_with);
                position[x] = swap_with;
                position[other] = pos;
                if now_active {
                    *active += 1;
                } else {
                    *active -= 1;
                }
            }
        }
    }

    /// Executes the next event, whatever its time.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepOutcome> {
        let t = self.next_event_time(rng);
        if !t.is_finite() {
            return Ok(StepOutcome::Absorbed);
        }
        let total = self.total_rate();
        let u: f64 = rng.random();
        let x = self.select_site(u * total);
        let holding = t - self.time;
        self.time = t;
        self.next_event = None;
        self.fire(x);
        if self.since_rebuild >= REBUILD_PERIOD {
            self.rebuild()?;
        }
        Ok(StepOutcome::Fired {
            site: x,
            time: t,
            holding,
        })
    }

    /// Runs every event up to and including time `t`, then sets the clock to `t`.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        if !(t >= self.time) {
            return Err(Error::param(
                "times",
                format!("cannot move the clock back from {} to {t}", self.time),
            ));
        }
        while self.next_event_time(rng) <= t {
            self.step(rng)?;
        }
        self.time = t;
        Ok(())
    }

    pub fn snapshot(&self, mode: SnapshotMode) -> Snapshot {
        Snapshot {
            time: self.time,
            counts: self.config.counts(),
            config: match mode {
                SnapshotMode::Counts => None,
                SnapshotMode::Full => Some(self.config.clone()),
            },
        }
    }

    /// Observes the process at each of the sorted `times`.
    pub fn simulate_until<R: Rng + ?Sized>(
        &mut self,
        times: &[f64],
        rng: &mut R,
        mode: SnapshotMode,
    ) -> Result<Vec<Snapshot>> {
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("times", "observation times must be strictly increasing"));
        }
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            self.advance_to(t, rng)?;
            out.push(self.snapshot(mode));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gcp::sample_initial;
    use crate::hydro::DensityField;
    use crate::kernel::{DiscreteKernel, KernelSpec};
    use crate::lattice::TorusLattice;
    use crate::rng::replica_rng;

    fn model(spec: KernelSpec, d: usize, n: usize, a: f64, k: usize) -> ModelParams {
        let l = TorusLattice::new(d, n).unwrap();
        let kern = DiscreteKernel::discretize(&spec, l).unwrap();
        ModelParams::new(a, k, Arc::new(kern)).unwrap()
    }

    fn cfg(p: &ModelParams, s: &[u8]) -> SpinConfig {
        SpinConfig::new(*p.lattice(), p.k(), s.to_vec()).unwrap()
    }

    #[test]
    fn rate_table_small_example() {
        let p = model(KernelSpec::Constant { value: 1.0 }, 1, 4, 1.5, 1);
        let rs = RateState::from_scratch(&cfg(&p, &[1, 0, 0, 1]), &p).unwrap();
        assert_eq!(rs.rates, vec![1.5, 0.5, 0.5, 1.5]);
        assert!((rs.total - 4.0).abs() < 1e-15);
        for kind in [EngineKind::Tree, EngineKind::Constant] {
            let sim = Simulation::with_engine(cfg(&p, &[1, 0, 0, 1]), p.clone(), kind).unwrap();
            assert!((sim.total_rate() - 4.0).abs() < 1e-12);
            assert!(sim.integrity_defect().unwrap() < 1e-12);
        }
    }

    #[test]
    fn firing_passive_site_activates_it() {
        let p = model(KernelSpec::Constant { value: 1.0 }, 1, 4, 1.5, 1);
        for kind in [EngineKind::Tree, EngineKind::Constant] {
            let mut sim = Simulation::with_engine(cfg(&p, &[1, 0, 0, 1]), p.clone(), kind).unwrap();
            sim.fire(1);
            assert_eq!(sim.config().states(), &[1, 1, 0, 1]);
            let rs = sim.rate_state();
            assert_eq!(rs.rates[1], 1.5);
            assert!((rs.rates[2] - 0.75).abs() < 1e-12);
            assert!(sim.integrity_defect().unwrap() < 1e-12);
        }
    }

    #[test]
    fn single_active_site_dies_and_absorbs() {
        let p = model(KernelSpec::zero(), 1, 4, 2.0, 1);
        let mut sim = Simulation::new(cfg(&p, &[0, 0, 1, 0]), p).unwrap();
        let mut rng = replica_rng(3, 0);
        match sim.step(&mut rng).unwrap() {
            StepOutcome::Fired { site, .. } => assert_eq!(site, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(sim.config().states(), &[0, 0, 0, 0]);
        assert_eq!(sim.total_rate(), 0.0);
        assert_eq!(sim.step(&mut rng).unwrap(), StepOutcome::Absorbed);
        let snaps = sim.simulate_until(&[5.0], &mut rng, SnapshotMode::Counts).unwrap();
        assert_eq!(snaps[0].counts, vec![4, 0]);
    }

    #[test]
    fn absorption_iff_no_active_sites() {
        let p = model(KernelSpec::Cosine { beta: 0.5 }, 1, 16, 1.0, 2);
        let u = DensityField::uniform(*p.lattice(), &[0.3, 0.3, 0.4]).unwrap();
        let mut rng = replica_rng(11, 0);
        let mut sim = Simulation::new(sample_initial(&u, &mut rng).unwrap(), p).unwrap();
        for _ in 0..5000 {
            let none_active = sim.config().active_sites().is_empty();
            assert_eq!(sim.total_rate() == 0.0, none_active);
            assert_eq!(sim.is_absorbed(), none_active);
            let absorbed = sim.step(&mut rng).unwrap() == StepOutcome::Absorbed;
            assert_eq!(absorbed, none_active);
            if absorbed {
                break;
            }
        }
    }

    #[test]
    fn incremental_rates_match_recomputation() {
        let specs = [
            KernelSpec::Cosine { beta: 0.9 },
            KernelSpec::Constant { value: 1.7 },
            KernelSpec::GaussianBump { amplitude: 3.0, width: 0.1 },
        ];
        for spec in specs {
            let p = model(spec, 2, 8, 0.4, 2);
            let u = DensityField::uniform(*p.lattice(), &[0.2, 0.3, 0.5]).unwrap();
            let mut rng = replica_rng(17, 1);
            let mut sim = Simulation::new(sample_initial(&u, &mut rng).unwrap(), p).unwrap();
            for _ in 0..10_000 {
                if sim.step(&mut rng).unwrap() == StepOutcome::Absorbed {
                    break;
                }
            }
            assert!(sim.integrity_defect().unwrap() < 1e-8);
        }
    }

    #[test]
    fn checkpointed_run_matches_single_run() {
        for spec in [KernelSpec::Cosine { beta: 0.3 }, KernelSpec::Constant { value: 2.0 }] {
            let p = model(spec, 1, 32, 1.0, 2);
            let u = DensityField::uniform(*p.lattice(), &[0.3, 0.3, 0.4]).unwrap();
            let run = |times: &[f64]| {
                let mut rng = replica_rng(99, 7);
                let s = sample_initial(&u, &mut rng).unwrap();
                let mut sim = Simulation::new(s, p.clone()).unwrap();
                sim.simulate_until(times, &mut rng, SnapshotMode::Full).unwrap().pop().unwrap()
            };
            let single = run(&[1.0]);
            let checkpointed = run(&[0.1, 0.35, 0.5, 1.0]);
            assert_eq!(single, checkpointed);
        }
    }

    #[test]
    fn time_zero_returns_initial_configuration() {
        let p = model(KernelSpec::Constant { value: 1.0 }, 1, 8, 1.0, 1);
        let c = cfg(&p, &[1, 0, 1, 0, 0, 0, 1, 1]);
        let mut sim = Simulation::new(c.clone(), p).unwrap();
        let snaps = sim.simulate_until(&[0.0], &mut replica_rng(1, 1), SnapshotMode::Full).unwrap();
        assert_eq!(snaps[0].config.as_ref(), Some(&c));
        assert!(sim.simulate_until(&[0.5, 0.5], &mut replica_rng(1, 1), SnapshotMode::Counts).is_err());
    }

    #[test]
    fn independent_deaths_follow_exponential_law() {
        // J = 0, everyone active: each site is an independent Exp(a) clock
        let p = model(KernelSpec::zero(), 1, 64, 1.0, 1);
        let t = 0.7;
        let reps = 500;
        let fracs: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = replica_rng(5, r);
                let mut sim = Simulation::new(cfg(&p, &[1; 64]), p.clone()).unwrap();
                let s = sim.simulate_until(&[t], &mut rng, SnapshotMode::Counts).unwrap();
                s[0].counts[1] as f64 / 64.0
            })
            .collect();
        let mean = fracs.iter().sum::<f64>() / reps as f64;
        let var = fracs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - (-t).exp()).abs() < 4.0 * se, "{mean} vs {}", (-t).exp());
    }

    #[test]
    fn jump_counts_match_pure_death_chain() {
        // with J = 0 an active site jumps at most once, with probability 1 - e^{-at}
        let p = model(KernelSpec::zero(), 1, 32, 0.5, 2);
        let t = 2.0;
        let reps = 400;
        let mut total = 0.0;
        let mut sq = 0.0;
        for r in 0..reps {
            let mut rng = replica_rng(8, r);
            let mut sim = Simulation::new(cfg(&p, &[2; 32]), p.clone()).unwrap();
            sim.advance_to(t, &mut rng).unwrap();
            let m = sim.jump_counts().iter().map(|&j| f64::from(j)).sum::<f64>() / 32.0;
            assert!(sim.jump_counts().iter().all(|&j| j <= 1));
            total += m;
            sq += m * m;
        }
        let mean = total / reps as f64;
        let se = ((sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        let expected = 1.0 - (-0.5 * t).exp();
        assert!((mean - expected).abs() < 4.0 * se);
    }

    #[test]
    fn partition_engine_rejected_for_varying_kernel() {
        let p = model(KernelSpec::Cosine { beta: 0.5 }, 1, 8, 1.0, 1);
        let c = cfg(&p, &[0; 8]);
        assert!(Simulation::with_engine(c, p, EngineKind::Constant).is_err());
    }
}
