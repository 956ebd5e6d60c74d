//! Experiment configuration. Every section has defaults, so an empty file is a
//! valid configuration; unknown fields are rejected.

use std::path::Path;

use rwre::env::annealed_kernel;
use rwre::estimators::{Sampling, VelocityEstimator};
use rwre::{make_environment, Atom, EnvironmentField, PerturbationModel, Site, TransitionKernel};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field(field: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.to_string() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub environment: EnvironmentConfig,
    pub velocity: VelocityConfig,
    pub invariant: InvariantConfig,
    pub mudelta: MuDeltaConfig,
    pub green: GreenConfig,
    pub jkernel: JKernelConfig,
    pub expansion: ExpansionConfig,
    pub kalikow: KalikowConfig,
    pub polycond: PolyConfig,
    pub torus: TorusConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            environment: EnvironmentConfig::default(),
            velocity: VelocityConfig::default(),
            invariant: InvariantConfig::default(),
            mudelta: MuDeltaConfig::default(),
            green: GreenConfig::default(),
            jkernel: JKernelConfig::default(),
            expansion: ExpansionConfig::default(),
            kalikow: KalikowConfig::default(),
            polycond: PolyConfig::default(),
            torus: TorusConfig::default(),
        }
    }
}

/// `"uniform"` or an explicit probability vector in the order
/// `+e1 -e1 +e2 -e2 ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelChoice {
    Named(String),
    Probs(Vec<f64>),
}

/// `"standard"`, `"zero"`, or a list of atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Named(String),
    Atoms { atoms: Vec<Atom> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub dim: usize,
    pub base: KernelChoice,
    pub epsilon: f64,
    pub model: ModelChoice,
    pub period: Option<u32>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            base: KernelChoice::Named("uniform".into()),
            epsilon: 0.1,
            model: ModelChoice::Named("standard".into()),
            period: None,
        }
    }
}

impl EnvironmentConfig {
    pub fn base_kernel(&self) -> Result<TransitionKernel, ConfigError> {
        match &self.base {
            KernelChoice::Named(n) if n == "uniform" => Ok(TransitionKernel::uniform(self.dim)),
            KernelChoice::Named(n) => Err(field("environment.base", format!("unknown kernel {n:?}"))),
            KernelChoice::Probs(p) => {
                let k = TransitionKernel::new(p.clone()).map_err(|e| field("environment.base", e))?;
                if k.dim() != self.dim {
                    return Err(field("environment.base", format!("has dimension {}, not {}", k.dim(), self.dim)));
                }
                Ok(k)
            }
        }
    }

    pub fn model(&self) -> Result<PerturbationModel, ConfigError> {
        match &self.model {
            ModelChoice::Named(n) if n == "standard" => Ok(PerturbationModel::standard_drift(self.dim)),
            ModelChoice::Named(n) if n == "zero" => Ok(PerturbationModel::zero(self.dim)),
            ModelChoice::Named(n) => Err(field("environment.model", format!("unknown model {n:?}"))),
            ModelChoice::Atoms { atoms } => {
                PerturbationModel::new(self.dim, atoms.clone()).map_err(|e| field("environment.model", e))
            }
        }
    }

    pub fn build(&self, seed: u64) -> Result<EnvironmentField, ConfigError> {
        if !(2..=rwre::lattice::MAX_DIM).contains(&self.dim) {
            return Err(field("environment.dim", format!("must lie in 2..={}", rwre::lattice::MAX_DIM)));
        }
        make_environment(self.base_kernel()?, self.epsilon, self.model()?, seed, self.period)
            .map_err(|e| field("environment", e))
    }

    /// `p_eps = p0 + eps E[xi]`.
    pub fn annealed(&self) -> Result<TransitionKernel, ConfigError> {
        annealed_kernel(&self.base_kernel()?, self.epsilon, &self.model()?).map_err(|e| field("environment", e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocityConfig {
    pub n_walks: u64,
    pub n_steps: u64,
    pub burn_in: Option<u64>,
    pub estimator: VelocityEstimator,
    pub sampling: Sampling,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self {
            n_walks: 200,
            n_steps: 100_000,
            burn_in: None,
            estimator: VelocityEstimator::DriftSum,
            sampling: Sampling::Fresh,
        }
    }
}

fn default_window() -> Vec<Vec<i64>> {
    vec![vec![0, 0], vec![1, 0]]
}

pub fn sites(name: &str, points: &[Vec<i64>], dim: usize) -> Result<Vec<Site>, ConfigError> {
    if points.is_empty() {
        return Err(field(name, "must not be empty"));
    }
    points
        .iter()
        .map(|p| {
            if p.len() != dim {
                Err(field(name, format!("point {p:?} has dimension {}, not {dim}", p.len())))
            } else {
                Ok(Site::new(p))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantConfig {
    pub window: Vec<Vec<i64>>,
    pub n_walks: u64,
    pub n_steps: u64,
    pub burn_in: Option<u64>,
    pub sampling: Sampling,
    /// Tolerance of the `J` table behind the first-order prediction column.
    pub j_tol: f64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            n_walks: 16,
            n_steps: 1_000_000,
            burn_in: None,
            sampling: Sampling::Fresh,
            j_tol: 1e-6,
        }
    }
}

/// `f = 1{atom at site is atom}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorConfig {
    pub site: Vec<i64>,
    pub atom: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuDeltaConfig {
    pub deltas: Vec<f64>,
    pub indicator: IndicatorConfig,
    /// Total walk steps per delta; replicas are `budget * (1 - delta)`.
    pub step_budget: u64,
    /// Reference time-averaged run.
    pub reference_walks: u64,
    pub reference_steps: u64,
}

impl Default for MuDeltaConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.9, 0.99, 0.999],
            indicator: IndicatorConfig { site: vec![1, 0], atom: 1 },
            step_budget: 40_000_000,
            reference_walks: 20,
            reference_steps: 2_000_000,
        }
    }
}

/// Which homogeneous kernel a Green or `J` computation uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelTarget {
    /// `"base"`, `"annealed"` or `"annealed-reversed"`.
    Named(String),
    Probs(Vec<f64>),
}

impl KernelTarget {
    pub fn resolve(&self, name: &str, env: &EnvironmentConfig) -> Result<TransitionKernel, ConfigError> {
        match self {
            KernelTarget::Named(n) => match n.as_str() {
                "base" => env.base_kernel(),
                "annealed" => env.annealed(),
                "annealed-reversed" => Ok(env.annealed()?.reversed()),
                other => Err(field(name, format!("unknown kernel {other:?}"))),
            },
            KernelTarget::Probs(p) => TransitionKernel::new(p.clone()).map_err(|e| field(name, e)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenConfig {
    pub kernel: KernelTarget,
    pub points: Vec<Vec<i64>>,
    pub tol: f64,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self { kernel: KernelTarget::Named("base".into()), points: vec![vec![1, 0], vec![0, 1]], tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JKernelConfig {
    pub kernel: KernelTarget,
    /// Table on the l1 ball of this radius.
    pub radius: i64,
    pub tol: f64,
}

impl Default for JKernelConfig {
    fn default() -> Self {
        Self { kernel: KernelTarget::Named("base".into()), radius: 4, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionConfig {
    pub period: u32,
    pub epsilons: Vec<f64>,
    /// Velocity-coefficient tolerance for the `J` table of `p*_eps`.
    pub j_tol: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { period: 8, epsilons: vec![0.02, 0.04, 0.08], j_tol: 1e-7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalikowConfig {
    /// Random probes for the homogeneity identity.
    pub homogeneity_probes: usize,
}

impl Default for KalikowConfig {
    fn default() -> Self {
        Self { homogeneity_probes: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolyConfig {
    pub direction: Vec<f64>,
    pub sizes: Vec<f64>,
    pub m: f64,
    pub n_runs: u64,
    pub max_steps: u64,
}

impl Default for PolyConfig {
    fn default() -> Self {
        Self {
            direction: vec![1.0, 0.0],
            sizes: vec![5.0, 8.0, 12.0, 18.0],
            m: 2.0,
            n_runs: 20_000,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorusConfig {
    pub period: u32,
    pub window: Vec<Vec<i64>>,
}

impl Default for TorusConfig {
    fn default() -> Self {
        Self { period: 4, window: default_window() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.environment.build(self.seed)?;
        let dim = self.environment.dim;
        sites("invariant.window", &self.invariant.window, dim)?;
        sites("torus.window", &self.torus.window, dim)?;
        sites("green.points", &self.green.points, dim)?;
        if self.mudelta.indicator.site.len() != dim {
            return Err(field("mudelta.indicator.site", format!("must have dimension {dim}")));
        }
        if self.mudelta.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(field("mudelta.deltas", "every delta must lie in (0,1)"));
        }
        if self.polycond.direction.len() != dim {
            return Err(field("polycond.direction", format!("must have dimension {dim}")));
        }
        if self.expansion.epsilons.is_empty() {
            return Err(field("expansion.epsilons", "must not be empty"));
        }
        let runs = [
            ("velocity", self.velocity.n_walks, self.velocity.n_steps, self.velocity.burn_in),
            ("invariant", self.invariant.n_walks, self.invariant.n_steps, self.invariant.burn_in),
            ("mudelta.reference", self.mudelta.reference_walks, self.mudelta.reference_steps, None),
        ];
        for (name, walks, steps, burn_in) in runs {
            if walks == 0 {
                return Err(field(name, "number of walks must be positive"));
            }
            if steps <= burn_in.unwrap_or(steps / 10) {
                return Err(field(name, "n_steps must exceed burn_in"));
            }
        }
        if self.mudelta.step_budget == 0 {
            return Err(field("mudelta.step_budget", "must be positive"));
        }
        if self.polycond.n_runs == 0 || self.polycond.sizes.iter().any(|l| !(*l > 0.0)) {
            return Err(field("polycond", "needs positive n_runs and box sizes"));
        }
        let tolerances = [
            ("invariant.j_tol", self.invariant.j_tol),
            ("green.tol", self.green.tol),
            ("jkernel.tol", self.jkernel.tol),
            ("expansion.j_tol", self.expansion.j_tol),
        ];
        for (name, tol) in tolerances {
            if !(tol > 0.0) {
                return Err(field(name, "must be positive"));
            }
        }
        for (name, period) in [("expansion.period", self.expansion.period), ("torus.period", self.torus.period)] {
            if period < 2 {
                return Err(field(name, "must be at least 2"));
            }
        }
        Ok(())
    }
}
