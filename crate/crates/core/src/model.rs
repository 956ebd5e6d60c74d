//! Finite-support laws of the perturbation vector `xi(x, .)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{sum, CompensatedSum};

const ATOM_TOL: f64 = 1e-12;

/// One support point `zeta` of the perturbation law, with its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub zeta: Vec<f64>,
    pub weight: f64,
}

impl Atom {
    pub fn new(zeta: Vec<f64>, weight: f64) -> Self {
        Self { zeta, weight }
    }
}

/// Law of `xi(0, .)` together with its first two moments.
///
/// Every atom preserves normalization (`sum_e zeta(e) = 0`) and is bounded by
/// one in absolute value, so `p0 + eps * zeta` is a probability vector as long
/// as `eps < min_e p0(e)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct PerturbationModel {
    dim: usize,
    atoms: Vec<Atom>,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    centered: Vec<Vec<f64>>,
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    dim: usize,
    atoms: Vec<Atom>,
}

impl TryFrom<ModelRepr> for PerturbationModel {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        Self::new(r.dim, r.atoms)
    }
}

impl From<PerturbationModel> for ModelRepr {
    fn from(m: PerturbationModel) -> Self {
        ModelRepr { dim: m.dim, atoms: m.atoms }
    }
}

impl PerturbationModel {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let n = 2 * dim;
        if atoms.is_empty() {
            return Err(Error::InvalidModel("no atoms".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.zeta.len() != n {
                return Err(Error::InvalidModel(format!(
                    "atom {i} has {} entries, expected {n}",
                    a.zeta.len()
                )));
            }
            if a.zeta.iter().any(|z| !z.is_finite() || z.abs() > 1.0 + ATOM_TOL) {
                return Err(Error::InvalidModel(format!("atom {i} has an entry outside [-1, 1]")));
            }
            let s = sum(a.zeta.iter().copied());
            if s.abs() > ATOM_TOL {
                return Err(Error::InvalidModel(format!(
                    "atom {i} entries sum to {s}; perturbations must preserve normalization"
                )));
            }
            if !(a.weight >= 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidModel(format!("atom {i} has weight {}", a.weight)));
            }
        }
        let total = sum(atoms.iter().map(|a| a.weight));
        if (total - 1.0).abs() > ATOM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {total}, not 1")));
        }

        let mean: Vec<f64> =
            (0..n).map(|e| sum(atoms.iter().map(|a| a.weight * a.zeta[e]))).collect();
        let centered: Vec<Vec<f64>> = atoms
            .iter()
            .map(|a| a.zeta.iter().zip(&mean).map(|(z, m)| z - m).collect())
            .collect();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            sum(atoms.iter().zip(&centered).map(|(a, c)| a.weight * c[i] * c[j]))
        });
        let mut acc = CompensatedSum::new();
        let mut cdf: Vec<f64> = atoms
            .iter()
            .map(|a| {
                acc.add(a.weight);
                acc.value()
            })
            .collect();
        // The last positive-weight atom absorbs rounding at the top of [0, 1).
        if let Some(last) = atoms.iter().rposition(|a| a.weight > 0.0) {
            for c in cdf[last..].iter_mut() {
                *c = f64::INFINITY;
            }
        }
        Ok(Self { dim, atoms, mean, cov, centered, cdf })
    }

    /// The zero perturbation: a single atom `zeta = 0`.
    pub fn zero(dim: usize) -> Self {
        Self::new(dim, vec![Atom::new(vec![0.0; 2 * dim], 1.0)]).expect("zero model is valid")
    }

    /// Two-atom model pushing along `e1`: `zeta+ = e1 - (-e1)` with weight 3/4
    /// and its negative with weight 1/4, so `E[xi(0, +-e1)] = +-1/2`.
    pub fn standard_drift(dim: usize) -> Self {
        let mut plus = vec![0.0; 2 * dim];
        plus[0] = 1.0;
        plus[1] = -1.0;
        let minus = plus.iter().map(|z| -z).collect();
        Self::new(dim, vec![Atom::new(plus, 0.75), Atom::new(minus, 0.25)])
            .expect("standard model is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// `E[xi(0, e)]`.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `C_{e,e'} = Cov(xi(0,e), xi(0,e'))`.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `xi_bar = zeta - E[xi]` for atom `index`.
    pub fn centered(&self, index: usize) -> &[f64] {
        &self.centered[index]
    }

    /// Atom selected by a uniform `u` in `[0, 1)`.
    #[inline]
    pub fn sample_index(&self, u: f64) -> usize {
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.atoms.len() - 1)
    }

    /// Mean of `xi(0,e) - xi(0,-e)` along `e1`, i.e. `d1 . e1`.
    pub fn mean_drift(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.mean[2 * a] - self.mean[2 * a + 1]).collect()
    }
}
