use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::entropy::StateSpace;
use crate::error::{Error, Result};
use crate::fields::TestFunction;
use crate::hydro::InitialProfile;
use crate::kernel::{KernelSpec, KernelTable};
use crate::lattice::TorusLattice;

/// Environment variable overriding the worker count.
pub const ENV_WORKERS: &str = "GCP_HYDRO_WORKERS";
/// Environment variable overriding the master seed.
pub const ENV_SEED: &str = "GCP_HYDRO_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    HydroConverge,
    LlnRate,
    CltCheck,
    QvCheck,
    InitCov,
    EntropyExact,
    Concentration,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::HydroConverge,
        ExperimentKind::LlnRate,
        ExperimentKind::CltCheck,
        ExperimentKind::QvCheck,
        ExperimentKind::InitCov,
        ExperimentKind::EntropyExact,
        ExperimentKind::Concentration,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::HydroConverge => "hydro-converge",
            ExperimentKind::LlnRate => "lln-rate",
            ExperimentKind::CltCheck => "clt-check",
            ExperimentKind::QvCheck => "qv-check",
            ExperimentKind::InitCov => "init-cov",
            ExperimentKind::EntropyExact => "entropy-exact",
            ExperimentKind::Concentration => "concentration",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Smallest replica count the experiment accepts.
    pub fn min_replicas(&self) -> usize {
        match self {
            ExperimentKind::CltCheck => 500,
            ExperimentKind::Concentration => crate::concentration::MIN_REPLICAS,
            _ => 1,
        }
    }
}

/// Kernel as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelConfig {
    Constant { value: f64 },
    Cosine { beta: f64 },
    Gaussian { amplitude: f64, width: f64 },
    /// CSV rows `x_index,y_index,value` for one specific lattice.
    Tabulated { path: PathBuf },
}

impl KernelConfig {
    pub fn to_spec(&self, lattice: TorusLattice) -> Result<KernelSpec> {
        Ok(match self {
            KernelConfig::Constant { value } => KernelSpec::Constant { value: *value },
            KernelConfig::Cosine { beta } => KernelSpec::Cosine { beta: *beta },
            KernelConfig::Gaussian { amplitude, width } => KernelSpec::GaussianBump {
                amplitude: *amplitude,
                width: *width,
            },
            KernelConfig::Tabulated { path } => {
                KernelSpec::Tabulated(std::sync::Arc::new(KernelTable::from_csv(path, lattice)?))
            }
        })
    }
}

fn default_functions() -> Vec<TestFunction> {
    vec![TestFunction::One, TestFunction::cos1()]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    pub k: usize,
    pub a: f64,
    pub kernel: KernelConfig,
    pub profile: InitialProfile,
    /// Interior margin required of the initial profile.
    pub epsilon: f64,
    pub n_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<usize>,
    pub times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    /// RK4 step; each model's default step when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default = "default_functions")]
    pub test_functions: Vec<TestFunction>,
    /// Observed state for single-state experiments; `k` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
    /// Also dump full configurations at every observation time.
    #[serde(default, skip_serializing_if = "is_false")]
    pub full_snapshots: bool,
    /// Also write the hydrodynamic trajectories as CSV.
    #[serde(default, skip_serializing_if = "is_false")]
    pub export_trajectory: bool,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

/// One problem found by [`ExperimentConfig::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ExperimentConfig {
    /// The stock configuration of each experiment.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let cosine3 = InitialProfile::Cosine {
            base: vec![0.3, 0.3, 0.4],
            amplitude: vec![0.1, -0.05, -0.05],
            mode: 1,
        };
        let cosine2 = InitialProfile::Cosine {
            base: vec![0.5, 0.5],
            amplitude: vec![-0.1, 0.1],
            mode: 1,
        };
        let mut c = ExperimentConfig {
            experiment: kind,
            d: 1,
            k: 2,
            a: 1.0,
            kernel: KernelConfig::Cosine { beta: 0.5 },
            profile: cosine3,
            epsilon: 0.05,
            n_list: vec![16, 32, 64, 128],
            n_ref: None,
            times: vec![1.0],
            replicas: 1,
            seed: 20240611,
            step: None,
            test_functions: default_functions(),
            state: None,
            full_snapshots: false,
            export_trajectory: false,
            out_dir: default_out(),
        };
        match kind {
            ExperimentKind::HydroConverge => {
                c.n_ref = Some(512);
            }
            ExperimentKind::LlnRate => {
                c.n_list = vec![64, 128, 256, 512];
                c.times = vec![0.5, 1.0];
                c.replicas = 400;
            }
            ExperimentKind::CltCheck => {
                c.k = 1;
                c.profile = cosine2;
                c.n_list = vec![256];
                c.times = vec![0.5];
                c.replicas = 4000;
                c.test_functions = vec![TestFunction::One];
            }
            ExperimentKind::QvCheck => {
                c.k = 1;
                c.profile = cosine2;
                c.n_list = vec![4];
                c.times = vec![0.0, 0.5];
                c.test_functions = vec![
                    TestFunction::One,
                    TestFunction::cos1(),
                    TestFunction::Bump {
                        center: vec![0.25],
                        width: 0.4,
                    },
                ];
            }
            ExperimentKind::InitCov => {
                c.n_list = vec![256];
                c.times = vec![0.0];
                c.replicas = 5000;
                c.test_functions = vec![TestFunction::One, TestFunction::cos1(), TestFunction::sin1()];
            }
            ExperimentKind::EntropyExact => {
                c.k = 1;
                c.kernel = KernelConfig::Constant { value: 1.0 };
                c.profile = InitialProfile::Constant {
                    probs: vec![0.6, 0.4],
                };
                c.n_list = vec![4];
                c.times = vec![0.25, 0.5, 1.0];
                c.step = Some(0.01);
                c.replicas = 100_000;
            }
            ExperimentKind::Concentration => {
                c.n_list = vec![2];
                c.times = vec![0.0];
                c.replicas = 50_000;
            }
        }
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(toml_error_field(&e), e.message()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Reads a file, then applies the environment and `key=value` overrides
    /// in that order.
    pub fn load(path: Option<&Path>, kind: Option<ExperimentKind>, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = match (path, kind) {
            (Some(p), _) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config("config", format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::config(toml_error_field(&e), e.message()))?
            }
            (None, Some(k)) => toml::Value::try_from(Self::default_for(k))
                .map_err(|e| Error::config("config", e.to_string()))?,
            (None, None) => return Err(Error::config("config", "no config file and no experiment given")),
        };
        if let Some(k) = kind {
            set_path(&mut value, "experiment", toml::Value::String(k.name().into()))?;
        }
        if let Ok(seed) = std::env::var(ENV_SEED) {
            let parsed: i64 = seed
                .trim()
                .parse()
                .map_err(|_| Error::config("seed", format!("{ENV_SEED}={seed} is not an integer")))?;
            set_path(&mut value, "seed", toml::Value::Integer(parsed))?;
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.clone(), "override must look like key=value"))?;
            set_path(&mut value, key.trim(), parse_override(raw.trim()))?;
        }
        value
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(toml_error_field(&e), e.message()))
    }

    /// Every problem with the configuration, reported together.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut bad = |field: &str, message: String| {
            v.push(Violation {
                field: field.into(),
                message,
            })
        };
        if self.d == 0 {
            bad("d", "dimension must be at least 1".into());
        }
        if self.k == 0 || self.k > 254 {
            bad("k", format!("threshold must be in 1..=254, got {}", self.k));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            bad("a", format!("recovery rate must be positive, got {}", self.a));
        }
        if self.profile.states() != self.k + 1 {
            bad(
                "profile",
                format!("profile has {} states but k + 1 = {}", self.profile.states(), self.k + 1),
            );
        }
        for msg in self.profile.violations(self.epsilon) {
            bad("profile", msg);
        }
        if self.times.is_empty() {
            bad("times", "at least one observation time is required".into());
        }
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            bad("times", "times must be finite and nonnegative".into());
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            bad("times", "times must be strictly increasing".into());
        }
        let min = self.experiment.min_replicas();
        if self.replicas < min {
            bad("replicas", format!("{} needs at least {min} replicas, got {}", self.experiment.name(), self.replicas));
        }
        if let Some(h) = self.step {
            if !(h.is_finite() && h > 0.0) {
                bad("step", format!("must be positive, got {h}"));
            }
        }
        if self.n_list.is_empty() {
            bad("n_list", "at least one lattice size is required".into());
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 2) {
            bad("n_list", format!("lattice sides must be at least 2, got {n}"));
        }
        if let Some(i) = self.state {
            if i > self.k {
                bad("state", format!("{i} exceeds k = {}", self.k));
            }
        }
        if self.test_functions.is_empty() {
            bad("test_functions", "at least one test function is required".into());
        }
        let kernel_check = TorusLattice::new(self.d.max(1), 2)
            .and_then(|l| self.kernel.to_spec(l))
            .and_then(|s| s.validate());
        if let (Err(e), false) = (kernel_check, matches!(self.kernel, KernelConfig::Tabulated { .. })) {
            bad("kernel", e.to_string());
        }
        match self.experiment {
            ExperimentKind::HydroConverge => {
                if self.n_list.len() < 3 {
                    bad("n_list", "a convergence study needs at least 3 sizes".into());
                }
                let max_n = self.n_list.iter().copied().max().unwrap_or(0);
                match self.n_ref {
                    None => bad("n_ref", "a reference size is required".into()),
                    Some(r) => {
                        if r < 4 * max_n {
                            bad("n_ref", format!("must be at least 4 x {max_n}"));
                        }
                        if let Some(n) = self.n_list.iter().find(|&&n| n >= 2 && r % n != 0) {
                            bad("n_ref", format!("{n} does not divide {r}"));
                        }
                    }
                }
            }
            ExperimentKind::LlnRate if self.n_list.len() < 3 => {
                bad("n_list", "a rate fit needs at least 3 sizes".into());
            }
            ExperimentKind::QvCheck | ExperimentKind::EntropyExact => {
                for &n in &self.n_list {
                    if let Err(e) = TorusLattice::new(self.d.max(1), n).and_then(|l| StateSpace::new(l, self.k.max(1))) {
                        bad("n_list", e.to_string());
                    }
                }
            }
            _ => {}
        }
        v
    }

    pub fn observed_state(&self) -> usize {
        self.state.unwrap_or(self.k)
    }
}

fn toml_error_field(e: &toml::de::Error) -> String {
    // toml reports the offending key in the message; keep the first quoted name
    let msg = e.message();
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_override(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(key, "cannot descend into a non-table value"))?;
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::config(key, "empty override key"))
}
