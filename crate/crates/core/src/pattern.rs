//! Finite windows `B` and the atom patterns the environment shows on them.
//!
//! A pattern is the tuple of atom indices at the window sites, taken in
//! lexicographic (row-major) site order. It is encoded as a mixed-radix
//! integer with the first site most significant.

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentField;
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::model::PerturbationModel;

/// Upper bound on the number of distinct patterns of a window.
pub const MAX_PATTERNS: u64 = 1 << 22;

pub type PatternIndex = u64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    sites: Vec<Site>,
    n_atoms: usize,
}

impl Window {
    pub fn new(mut sites: Vec<Site>, n_atoms: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Precondition("window must contain at least one site".into()));
        }
        let dim = sites[0].dim();
        if let Some(s) = sites.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
        }
        if n_atoms == 0 {
            return Err(Error::Precondition("model has no atoms".into()));
        }
        sites.sort();
        sites.dedup();
        let n = (n_atoms as f64).powi(sites.len() as i32);
        if n > MAX_PATTERNS as f64 {
            return Err(Error::Precondition(format!(
                "window has {n} patterns, above the limit of {MAX_PATTERNS}"
            )));
        }
        Ok(Self { sites, n_atoms })
    }

    pub fn for_model(sites: Vec<Site>, model: &PerturbationModel) -> Result<Self> {
        Self::new(sites, model.n_atoms())
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn dim(&self) -> usize {
        self.sites[0].dim()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_patterns(&self) -> u64 {
        (self.n_atoms as u64).pow(self.sites.len() as u32)
    }

    /// Pattern of `t_x omega` on the window.
    #[inline]
    pub fn pattern_at(&self, env: &EnvironmentField, x: &Site) -> PatternIndex {
        let base = self.n_atoms as u64;
        self.sites.iter().fold(0, |acc, z| acc * base + env.atom_index(&x.add(z)) as u64)
    }

    pub fn encode(&self, atoms: &[usize]) -> PatternIndex {
        assert_eq!(atoms.len(), self.sites.len());
        let base = self.n_atoms as u64;
        atoms.iter().fold(0, |acc, &a| {
            assert!(a < self.n_atoms);
            acc * base + a as u64
        })
    }

    pub fn decode(&self, mut index: PatternIndex) -> Vec<usize> {
        let base = self.n_atoms as u64;
        let mut out = vec![0; self.sites.len()];
        for slot in out.iter_mut().rev() {
            *slot = (index % base) as usize;
            index /= base;
        }
        out
    }

    /// Exact product pmf of the patterns under the i.i.d. environment law.
    pub fn product_pmf(&self, model: &PerturbationModel) -> Vec<f64> {
        (0..self.n_patterns())
            .map(|i| self.decode(i).iter().map(|&a| model.atoms()[a].weight).product())
            .collect()
    }
}

/// Indicator of a set of patterns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternIndicator {
    members: Vec<bool>,
}

impl PatternIndicator {
    pub fn from_fn(window: &Window, f: impl Fn(&[usize]) -> bool) -> Self {
        Self { members: (0..window.n_patterns()).map(|i| f(&window.decode(i))).collect() }
    }

    pub fn always(window: &Window) -> Self {
        Self { members: vec![true; window.n_patterns() as usize] }
    }

    pub fn complement(&self) -> Self {
        Self { members: self.members.iter().map(|m| !m).collect() }
    }

    #[inline]
    pub fn contains(&self, p: PatternIndex) -> bool {
        self.members[p as usize]
    }

    /// `sum_{p in set} pmf[p]`.
    pub fn mass(&self, pmf: &[f64]) -> f64 {
        crate::stats::sum(pmf.iter().zip(&self.members).filter(|(_, m)| **m).map(|(p, _)| *p))
    }
}
