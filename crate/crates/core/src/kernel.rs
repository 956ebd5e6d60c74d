use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Direction, MAX_DIM};

/// Tolerance on `sum_e p(e) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Nearest-neighbour jump probabilities `p(e)`, indexed by [`Direction`].
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TransitionKernel {
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.len() % 2 != 0 || probs.len() > 2 * MAX_DIM {
            return Err(Error::InvalidKernel(format!(
                "expected 2d entries with 1 <= d <= {MAX_DIM}, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidKernel(format!("entry {p} is not a probability")));
        }
        let total: f64 = crate::stats::sum(probs.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidKernel(format!("entries sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Simple symmetric random walk.
    pub fn uniform(dim: usize) -> Self {
        Self { probs: vec![1.0 / (2 * dim) as f64; 2 * dim] }
    }

    /// The walk that always steps along `dir`.
    pub fn deterministic(dim: usize, dir: Direction) -> Self {
        let mut probs = vec![0.0; 2 * dim];
        probs[dir.index()] = 1.0;
        Self { probs }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.probs.len() / 2
    }

    #[inline]
    pub fn prob(&self, dir: Direction) -> f64 {
        self.probs[dir.index()]
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_uniformly_elliptic(&self) -> bool {
        self.min_prob() > 0.0
    }

    /// `p*(e) = p(-e)`.
    pub fn reversed(&self) -> Self {
        let probs = Direction::all(self.dim()).map(|e| self.prob(e.reverse())).collect();
        Self { probs }
    }

    /// `sum_e e p(e)`.
    pub fn local_drift(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for axis in 0..self.dim() {
            d[axis] = self.probs[2 * axis] - self.probs[2 * axis + 1];
        }
        d
    }

    /// `p(e) = p(-e)` for every direction.
    pub fn is_symmetric(&self) -> bool {
        self.local_drift().iter().all(|d| *d == 0.0)
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.probs.len() as f64;
        self.probs.iter().all(|p| (p - u).abs() <= NORMALIZATION_TOL)
    }
}

/// Mean one-step displacement of a kernel.
pub fn local_drift(kernel: &TransitionKernel) -> Vec<f64> {
    kernel.local_drift()
}

impl TryFrom<Vec<f64>> for TransitionKernel {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TransitionKernel> for Vec<f64> {
    fn from(k: TransitionKernel) -> Vec<f64> {
        k.probs
    }
}

impl fmt::Debug for TransitionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TransitionKernel({self})")
    }
}

/// Canonical text form: entries in the order `+e1 -e1 +e2 -e2 ...`,
/// space-separated, shortest round-trip representation.
impl fmt::Display for TransitionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.probs.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{p:?}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for TransitionKernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let probs = s
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srw_has_no_drift() {
        assert_eq!(local_drift(&TransitionKernel::uniform(2)), vec![0.0, 0.0]);
        assert!(TransitionKernel::uniform(3).is_symmetric());
    }

    #[test]
    fn drift_arithmetic() {
        let k = TransitionKernel::new(vec![0.3, 0.2, 0.25, 0.25]).unwrap();
        let d = local_drift(&k);
        assert!((d[0] - 0.1).abs() < 1e-15 && d[1] == 0.0);
    }

    #[test]
    fn reversal_swaps_opposite_entries() {
        let k = TransitionKernel::new(vec![0.3, 0.2, 0.4, 0.1]).unwrap();
        assert_eq!(k.reversed().probs(), &[0.2, 0.3, 0.1, 0.4]);
        assert_eq!(k.reversed().reversed(), k);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(TransitionKernel::new(vec![0.5, 0.5, 0.1]).is_err());
        assert!(TransitionKernel::new(vec![0.6, 0.6]).is_err());
        assert!(TransitionKernel::new(vec![1.5, -0.5]).is_err());
        assert!(TransitionKernel::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn ellipticity_flag() {
        assert!(TransitionKernel::uniform(2).is_uniformly_elliptic());
        assert!(!TransitionKernel::deterministic(2, Direction::new(0)).is_uniformly_elliptic());
    }

    #[test]
    fn canonical_text_round_trips() {
        let k = TransitionKernel::new(vec![0.3, 0.2, 0.25, 0.25]).unwrap();
        assert_eq!(k.to_string(), "0.3 0.2 0.25 0.25");
        assert_eq!(k.to_string().parse::<TransitionKernel>().unwrap(), k);
    }
}
