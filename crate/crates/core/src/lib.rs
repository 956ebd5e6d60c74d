//! Random walks in low-disorder random environments.
//!
//! Environments are i.i.d. perturbations `omega(x, e) = p0(e) + eps * xi(x, e)`
//! of a homogeneous kernel. The crate simulates quenched walks, computes
//! Green functions and the centered kernel `J_p`, evaluates the first-order
//! expansion of the invariant measure of the environment seen from the walker,
//! solves the periodized environmental process exactly, and checks
//! ballisticity conditions.

pub mod ballistic;
pub mod env;
pub mod error;
pub mod estimators;
pub mod expansion;
mod fourier;
pub mod kernel;
pub mod green;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod pattern;
pub mod potential;
pub mod rng;
pub mod series;
pub mod stats;
pub mod torus;
pub mod walk;

pub use env::{make_environment, EnvSpec, EnvironmentField};
pub use error::{Error, Result};
pub use kernel::TransitionKernel;
pub use lattice::{Direction, Site};
pub use model::{Atom, PerturbationModel};

/// Chapters of the guide, compiled as doctests so the book cannot drift.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/velocity.md")]
    mod velocity {}
    #[doc = include_str!("../../../book/src/invariant-measure.md")]
    mod invariant_measure {}
    #[doc = include_str!("../../../book/src/green-functions.md")]
    mod green_functions {}
    #[doc = include_str!("../../../book/src/expansion.md")]
    mod expansion {}
    #[doc = include_str!("../../../book/src/ballisticity.md")]
    mod ballisticity {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
