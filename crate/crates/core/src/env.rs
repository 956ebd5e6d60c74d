//! Deterministic, lazily evaluated random environments.
//!
//! `omega(x, e) = p0(e) + eps * xi(x, e)` where the atom of `xi(x, .)` is a
//! pure function of `(seed, x)`. Nothing is stored per site, so arbitrarily
//! large regions can be explored. With a period `L` the field is evaluated at
//! `x mod L`, which realizes a periodic environment on the torus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::{Site, MAX_DIM};
use crate::model::PerturbationModel;
use crate::rng::{site_hash, unit_f64};

/// Serializable description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub base: TransitionKernel,
    pub epsilon: f64,
    pub model: PerturbationModel,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<u32>,
}

impl EnvSpec {
    pub fn build(&self) -> Result<EnvironmentField> {
        make_environment(self.base.clone(), self.epsilon, self.model.clone(), self.seed, self.period)
    }
}

/// A realized environment. Immutable and cheap to share across threads.
#[derive(Clone, Debug)]
pub struct EnvironmentField {
    spec: EnvSpec,
    kappa: f64,
    atom_kernels: Vec<TransitionKernel>,
    atom_cdfs: Vec<[f64; 2 * MAX_DIM]>,
    atom_drifts: Vec<[f64; MAX_DIM]>,
}

/// Builds an environment, checking uniform ellipticity.
///
/// `epsilon = 0` is accepted for any base kernel (the unperturbed walk), which
/// allows degenerate kernels such as the deterministic walk.
pub fn make_environment(
    base: TransitionKernel,
    epsilon: f64,
    model: PerturbationModel,
    seed: u64,
    period: Option<u32>,
) -> Result<EnvironmentField> {
    let dim = base.dim();
    if model.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: model.dim() });
    }
    let min_prob = base.min_prob();
    let kappa = min_prob - epsilon;
    if !(epsilon >= 0.0) || (epsilon > 0.0 && kappa <= 0.0) {
        return Err(Error::EllipticityViolated { epsilon, min_prob, kappa });
    }
    if period == Some(0) {
        return Err(Error::Precondition("torus period must be positive".into()));
    }
    let mut atom_kernels = Vec::with_capacity(model.n_atoms());
    let mut atom_cdfs = Vec::with_capacity(model.n_atoms());
    let mut atom_drifts = Vec::with_capacity(model.n_atoms());
    for atom in model.atoms() {
        let probs: Vec<f64> =
            base.probs().iter().zip(&atom.zeta).map(|(p, z)| p + epsilon * z).collect();
        let kernel = TransitionKernel::new(probs)?;
        let mut cdf = [f64::INFINITY; 2 * MAX_DIM];
        let mut acc = 0.0;
        for (i, p) in kernel.probs().iter().enumerate() {
            acc += p;
            cdf[i] = acc;
        }
        if let Some(last) = kernel.probs().iter().rposition(|p| *p > 0.0) {
            for c in cdf[last..].iter_mut() {
                *c = f64::INFINITY;
            }
        }
        let mut drift = [0.0; MAX_DIM];
        drift[..dim].copy_from_slice(&kernel.local_drift());
        atom_kernels.push(kernel);
        atom_cdfs.push(cdf);
        atom_drifts.push(drift);
    }
    Ok(EnvironmentField {
        spec: EnvSpec { base, epsilon, model, seed, period },
        kappa,
        atom_kernels,
        atom_cdfs,
        atom_drifts,
    })
}

impl EnvironmentField {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.base.dim()
    }

    pub fn base(&self) -> &TransitionKernel {
        &self.spec.base
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon
    }

    pub fn model(&self) -> &PerturbationModel {
        &self.spec.model
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn period(&self) -> Option<u32> {
        self.spec.period
    }

    /// `min_e p0(e) - eps`, a lower bound on every jump probability.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Same law and period, different realization.
    pub fn reseeded(&self, seed: u64) -> EnvironmentField {
        let mut out = self.clone();
        out.spec.seed = seed;
        out
    }

    /// Atom index of `xi(x, .)`.
    #[inline]
    pub fn atom_index(&self, x: &Site) -> usize {
        let h = match self.spec.period {
            Some(l) => site_hash(self.spec.seed, &x.reduce(l)),
            None => site_hash(self.spec.seed, x),
        };
        self.spec.model.sample_index(unit_f64(h))
    }

    /// `omega(x, .)`.
    #[inline]
    pub fn site_kernel(&self, x: &Site) -> &TransitionKernel {
        &self.atom_kernels[self.atom_index(x)]
    }

    /// Kernel attached to atom `index`.
    pub fn atom_kernel(&self, index: usize) -> &TransitionKernel {
        &self.atom_kernels[index]
    }

    /// Cumulative jump distribution of atom `index`; entries past the last
    /// reachable direction are `+inf`.
    #[inline]
    pub fn atom_cdf(&self, index: usize) -> &[f64; 2 * MAX_DIM] {
        &self.atom_cdfs[index]
    }

    /// Local drift `d(x, omega)` of atom `index`, zero-padded.
    #[inline]
    pub fn atom_drift(&self, index: usize) -> &[f64; MAX_DIM] {
        &self.atom_drifts[index]
    }

    /// `p_eps(e) = p0(e) + eps E[xi(0,e)]`.
    pub fn annealed_kernel(&self) -> TransitionKernel {
        annealed_kernel(&self.spec.base, self.spec.epsilon, &self.spec.model)
            .expect("validated environments have a valid annealed kernel")
    }

    /// `E[d(0, omega)]`, computed from the model moments.
    pub fn mean_drift(&self) -> Vec<f64> {
        self.annealed_kernel().local_drift()
    }
}

/// `p_eps(e) = p0(e) + eps E[xi(0,e)]`, so that
/// `omega(x,e) = p_eps(e) + eps xi_bar(x,e)` holds identically.
pub fn annealed_kernel(
    base: &TransitionKernel,
    epsilon: f64,
    model: &PerturbationModel,
) -> Result<TransitionKernel> {
    if base.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), got: model.dim() });
    }
    let probs = base.probs().iter().zip(model.mean()).map(|(p, m)| p + epsilon * m).collect();
    TransitionKernel::new(probs)
}

/// Convenience wrapper for [`EnvironmentField::site_kernel`].
pub fn site_kernel<'a>(env: &'a EnvironmentField, x: &Site) -> &'a TransitionKernel {
    env.site_kernel(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DriftConditionKind {
    /// `E[d . e1] > C eps`.
    Lld,
    /// `E[d . e1] > C eps^2`.
    Qld,
    /// `E[d . e1] > C eps^(alpha(d) - eta)`, uniform `p0` only.
    Ld,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftConditionSpec {
    pub kind: DriftConditionKind,
    pub c: f64,
    #[serde(default)]
    pub eta: f64,
}

/// Exponent of the local drift condition: 2 in `d = 2`, 2.5 in `d = 3`, 3 above.
pub fn alpha(dim: usize) -> Result<f64> {
    match dim {
        2 => Ok(2.0),
        3 => Ok(2.5),
        d if d >= 4 => Ok(3.0),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Both sides of a drift condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftMargin {
    pub kind: DriftConditionKind,
    /// `E[d(0, omega) . e1]`.
    pub mean_drift: f64,
    pub threshold: f64,
    pub exponent: f64,
    pub holds: bool,
}

pub fn check_drift_condition(env: &EnvironmentField, spec: &DriftConditionSpec) -> Result<DriftMargin> {
    if !(spec.c > 0.0) {
        return Err(Error::Precondition(format!("constant C must be positive, got {}", spec.c)));
    }
    let eps = env.epsilon();
    let exponent = match spec.kind {
        DriftConditionKind::Lld => 1.0,
        DriftConditionKind::Qld => 2.0,
        DriftConditionKind::Ld => {
            if !env.base().is_uniform() {
                return Err(Error::Precondition(
                    "the LD condition is defined for perturbations of the simple symmetric walk".into(),
                ));
            }
            if !(spec.eta > 0.0 && spec.eta < 1.0) {
                return Err(Error::Precondition(format!("eta must lie in (0,1), got {}", spec.eta)));
            }
            alpha(env.dim())? - spec.eta
        }
    };
    let mean_drift = env.mean_drift()[0];
    let threshold = spec.c * eps.powf(exponent);
    Ok(DriftMargin { kind: spec.kind, mean_drift, threshold, exponent, holds: mean_drift > threshold })
}
