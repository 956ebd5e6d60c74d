//! First-order expansion of the invariant density and velocity coefficients.
//!
//! The first-order density on a window `B` is
//! `1 + eps * sum_{z in B} sum_e xi_bar(z, e) K(z + e)` where `K` is built
//! from the centered kernel `J` of the reversed annealed walk. Two placements
//! of the argument are supported, see [`Orientation`]; which one reproduces
//! the exact first-order term is decided on the torus by
//! [`orientation_check`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::env::{annealed_kernel, EnvironmentField};
use crate::error::{Error, Result};
use crate::green::JTable;
use crate::kernel::TransitionKernel;
use crate::lattice::{Direction, Site};
use crate::model::PerturbationModel;
use crate::pattern::{PatternIndex, Window};
use crate::stats::CompensatedSum;
use crate::torus::{centered_field, torus_expansion_terms_with_cap, torus_j_kernel, TorusGeometry};

/// Where the centered kernel of the reversed walk `p*` is evaluated for the
/// perturbation at `z` in direction `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `J_{p*}(-(z + e))`, equivalently `J_p(z + e)`.
    Reflected,
    /// `J_{p*}(z + e)`.
    Literal,
}

impl Orientation {
    pub fn argument(self, z: &Site, e: Direction) -> Site {
        let w = z.step(e);
        match self {
            Orientation::Reflected => w.neg(),
            Orientation::Literal => w,
        }
    }
}

/// Kernel whose reversal supplies `J`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionKernel {
    /// `p_eps = p0 + eps E[xi]`.
    Annealed,
    /// `p0`.
    Base,
}

/// Tolerance for matching a table's kernel against the expected one.
const KERNEL_MATCH_TOL: f64 = 1e-12;

fn expected_kernel(p0: &TransitionKernel, model: &PerturbationModel, eps: f64, which: ExpansionKernel) -> Result<TransitionKernel> {
    match which {
        ExpansionKernel::Annealed => annealed_kernel(p0, eps, model),
        ExpansionKernel::Base => Ok(p0.clone()),
    }
}

fn check_table_kernel(table: &JTable, want: &TransitionKernel) -> Result<()> {
    let close = table.kernel.dim() == want.dim()
        && table.kernel.probs().iter().zip(want.probs()).all(|(a, b)| (a - b).abs() <= KERNEL_MATCH_TOL);
    if close {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "J table was computed for kernel {} but the expansion needs {}",
            table.kernel, want
        )))
    }
}

/// First-order density on a window, ready to evaluate on patterns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityExpansion {
    pub window: Vec<Site>,
    pub epsilon: f64,
    pub orientation: Orientation,
    pub kernel_used: ExpansionKernel,
    /// `coefficients[k][e]` multiplies `xi_bar(window[k], e)`.
    pub coefficients: Vec<Vec<f64>>,
    /// Centered atoms `xi_bar`, indexed by atom.
    centered: Vec<Vec<f64>>,
}

impl DensityExpansion {
    /// `1 + eps * sum_k sum_e xi_bar(z_k, e) c_k(e)` for the atom assignment
    /// `atoms` (one atom index per window site, in window order).
    pub fn evaluate(&self, atoms: &[usize]) -> f64 {
        assert_eq!(atoms.len(), self.window.len(), "one atom per window site");
        let mut acc = CompensatedSum::new();
        for (k, &a) in atoms.iter().enumerate() {
            for (c, x) in self.coefficients[k].iter().zip(&self.centered[a]) {
                acc.add(c * x);
            }
        }
        1.0 + self.epsilon * acc.value()
    }

    pub fn evaluate_pattern(&self, window: &Window, pattern: PatternIndex) -> f64 {
        self.evaluate(&window.decode(pattern))
    }

    /// Density for every pattern of `window`.
    pub fn table(&self, window: &Window) -> Vec<f64> {
        (0..window.n_patterns()).map(|p| self.evaluate_pattern(window, p)).collect()
    }
}

/// Builds the first-order density on `window` from a `J` table of the
/// reversed kernel (`p*_eps` or `p*_0` according to `kernel_used`).
pub fn first_order_density(
    p0: &TransitionKernel,
    epsilon: f64,
    model: &PerturbationModel,
    window: &Window,
    jtable: &JTable,
    orientation: Orientation,
    kernel_used: ExpansionKernel,
) -> Result<DensityExpansion> {
    let dim = p0.dim();
    if model.dim() != dim || window.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: model.dim().max(window.dim()) });
    }
    check_table_kernel(jtable, &expected_kernel(p0, model, epsilon, kernel_used)?.reversed())?;
    let needed: Vec<Site> = window
        .sites()
        .iter()
        .flat_map(|z| Direction::all(dim).map(move |e| orientation.argument(z, e)))
        .collect();
    jtable.require(&needed)?;
    let coefficients = window
        .sites()
        .iter()
        .map(|z| Direction::all(dim).map(|e| jtable.get(&orientation.argument(z, e)).unwrap()).collect())
        .collect();
    Ok(DensityExpansion {
        window: window.sites().to_vec(),
        epsilon,
        orientation,
        kernel_used,
        coefficients,
        centered: (0..model.n_atoms()).map(|a| model.centered(a).to_vec()).collect(),
    })
}

/// Centered perturbation at `z1 = (1, 0)` for an atom assignment on
/// `B = {(0,0), (1,0)}`.
fn xi_bar_at_z1(model: &PerturbationModel, atoms: &[usize; 2]) -> Result<Vec<f64>> {
    if model.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: model.dim() });
    }
    Ok(model.centered(atoms[1]).to_vec())
}

/// Closed-form first-order density of the uniform two-dimensional walk on
/// `B = {(0,0), (1,0)}` in its explicit form:
/// `1 - (4/pi)(xi_bar(z1,e1) + xi_bar(z1,-e1)) eps + (8/pi - 4) xi_bar(z1,e2) eps`.
pub fn explicit_2d_density(model: &PerturbationModel, atoms: &[usize; 2], epsilon: f64) -> Result<f64> {
    let x = xi_bar_at_z1(model, atoms)?;
    Ok(explicit_2d_density_from(&x, epsilon))
}

pub fn explicit_2d_density_from(xi_bar_z1: &[f64], epsilon: f64) -> f64 {
    1.0 - (4.0 / PI) * (xi_bar_z1[0] + xi_bar_z1[1]) * epsilon + (8.0 / PI - 4.0) * xi_bar_z1[2] * epsilon
}

/// The same density obtained by substituting the potential kernel values
/// `a(e) = 1`, `a(2,0) = 4 - 8/pi`, `a(1,1) = 4/pi` into the first-order
/// formula with `J = -a`, then using `sum_e xi_bar = 0`:
/// `1 + (12/pi - 4) xi_bar(z1,e1) eps + (4/pi) xi_bar(z1,-e1) eps`.
pub fn substituted_2d_density(model: &PerturbationModel, atoms: &[usize; 2], epsilon: f64) -> Result<f64> {
    let x = xi_bar_at_z1(model, atoms)?;
    Ok(substituted_2d_density_from(&x, epsilon))
}

pub fn substituted_2d_density_from(xi_bar_z1: &[f64], epsilon: f64) -> f64 {
    1.0 + (12.0 / PI - 4.0) * xi_bar_z1[0] * epsilon + (4.0 / PI) * xi_bar_z1[1] * epsilon
}

/// Coefficients of `v = d0 + eps d1 + eps^2 d2 + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityExpansion {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    /// `sum_e e sum_e' C_{e,e'} K(e')`, `K` placed by `orientation`.
    pub d2: Vec<f64>,
    pub epsilon: f64,
    /// Slack in the remainder exponent, recorded for reports.
    pub eta: f64,
    pub orientation: Orientation,
}

impl VelocityExpansion {
    /// `d0 + eps d1 + eps^2 d2`.
    pub fn approximation(&self) -> Vec<f64> {
        let e = self.epsilon;
        (0..self.d0.len()).map(|i| self.d0[i] + e * self.d1[i] + e * e * self.d2[i]).collect()
    }

    /// `d0 + eps d1`.
    pub fn first_order(&self) -> Vec<f64> {
        (0..self.d0.len()).map(|i| self.d0[i] + self.epsilon * self.d1[i]).collect()
    }
}

/// Velocity coefficients from the model moments and a `J` table of `p*_eps`.
pub fn velocity_coefficients(
    p0: &TransitionKernel,
    model: &PerturbationModel,
    epsilon: f64,
    jtable: &JTable,
    orientation: Orientation,
) -> Result<VelocityExpansion> {
    let dim = p0.dim();
    if model.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: model.dim() });
    }
    check_table_kernel(jtable, &annealed_kernel(p0, epsilon, model)?.reversed())?;
    let origin = Site::origin(dim);
    let args: Vec<Site> = Direction::all(dim).map(|e| orientation.argument(&origin, e)).collect();
    let k = jtable.require(&args)?;
    let cov = model.cov();
    let mut d2 = vec![0.0; dim];
    for e in Direction::all(dim) {
        let mut inner = CompensatedSum::new();
        for f in Direction::all(dim) {
            inner.add(cov[(e.index(), f.index())] * k[f.index()]);
        }
        d2[e.axis()] += e.sign() as f64 * inner.value();
    }
    Ok(VelocityExpansion {
        d0: p0.local_drift(),
        d1: model.mean_drift(),
        d2,
        epsilon,
        eta: 0.0,
        orientation,
    })
}

/// Comparison of both orientations against the exact first-order term on a
/// torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationReport {
    pub period: u32,
    pub epsilon: f64,
    /// `max_x |h1(x) - candidate(x)|` for [`Orientation::Reflected`].
    pub reflected_error: f64,
    pub literal_error: f64,
    /// Scale of `h1` for reference.
    pub h1_max: f64,
    pub selected: Orientation,
}

/// `sum_z sum_e xi_bar(x + z, e) K_torus(z + e)` for every torus site `x`.
pub fn torus_first_order(
    geom: &TorusGeometry,
    xi_bar: &[Vec<f64>],
    k_torus: &[f64],
) -> Vec<f64> {
    let n = geom.n_states();
    let sites: Vec<Site> = (0..n).map(|i| geom.site(i)).collect();
    let dirs: Vec<Direction> = Direction::all(geom.dim).collect();
    (0..n)
        .map(|x| {
            let mut acc = CompensatedSum::new();
            for z in &sites {
                let site = geom.index(&sites[x].add(z));
                for e in &dirs {
                    let w = geom.index(&z.step(*e));
                    acc.add(xi_bar[site][e.index()] * k_torus[w]);
                }
            }
            acc.value()
        })
        .collect()
}

/// Decides the argument placement by comparing both candidates with the
/// exactly solved first-order term `h1` on the periodic environment `env`.
pub fn orientation_check(env: &EnvironmentField, cap: usize) -> Result<OrientationReport> {
    let ex = torus_expansion_terms_with_cap(env, 1, cap)?;
    let geom = ex.geometry;
    let h1 = &ex.terms[1];
    let p_eps = env.annealed_kernel();
    let xi_bar = centered_field(env, &geom);
    let err = |k: &[f64]| {
        torus_first_order(&geom, &xi_bar, k).iter().zip(h1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    // J_{p*}(-w) is the torus kernel of p itself.
    let reflected_error = err(&torus_j_kernel(&p_eps, geom.period, cap)?);
    let literal_error = err(&torus_j_kernel(&p_eps.reversed(), geom.period, cap)?);
    Ok(OrientationReport {
        period: geom.period,
        epsilon: env.epsilon(),
        reflected_error,
        literal_error,
        h1_max: h1.iter().fold(0.0, |m, v| m.max(v.abs())),
        selected: if reflected_error <= literal_error { Orientation::Reflected } else { Orientation::Literal },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_environment;
    use crate::green::j_kernel;
    use crate::model::Atom;

    fn uniform_table(radius: i64) -> JTable {
        j_kernel(&TransitionKernel::uniform(2), &crate::lattice::l1_ball(2, radius), 1e-8).unwrap()
    }

    #[test]
    fn zero_perturbation_density_is_one() {
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::zero(2);
        let w = Window::for_model(vec![Site::origin(2), Site::new(&[1, 0])], &model).unwrap();
        let t = uniform_table(3);
        for o in [Orientation::Reflected, Orientation::Literal] {
            let d = first_order_density(&p0, 0.1, &model, &w, &t, o, ExpansionKernel::Annealed).unwrap();
            assert_eq!(d.evaluate(&[0, 0]), 1.0);
        }
    }

    #[test]
    fn single_site_window_with_isotropic_kernel() {
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::new(
            2,
            vec![Atom::new(vec![0.5, -0.2, 0.1, -0.4], 0.5), Atom::new(vec![-0.5, 0.2, -0.1, 0.4], 0.5)],
        )
        .unwrap();
        let w = Window::for_model(vec![Site::origin(2)], &model).unwrap();
        let t = uniform_table(2);
        let d = first_order_density(&p0, 0.1, &model, &w, &t, Orientation::Literal, ExpansionKernel::Base).unwrap();
        for a in 0..2 {
            assert!((d.evaluate(&[a]) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn missing_points_are_reported() {
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::standard_drift(2);
        let w = Window::for_model(vec![Site::origin(2), Site::new(&[3, 0])], &model).unwrap();
        let t = uniform_table(2);
        let err = first_order_density(&p0, 0.0, &model, &w, &t, Orientation::Literal, ExpansionKernel::Base)
            .unwrap_err();
        assert!(matches!(err, Error::MissingPoints(ref pts) if pts.contains(&vec![4, 0])));
    }

    #[test]
    fn wrong_kernel_is_rejected() {
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::standard_drift(2);
        let w = Window::for_model(vec![Site::origin(2)], &model).unwrap();
        let t = uniform_table(2);
        assert!(first_order_density(&p0, 0.1, &model, &w, &t, Orientation::Literal, ExpansionKernel::Annealed)
            .is_err());
    }

    #[test]
    fn explicit_forms() {
        let eps = 0.1;
        assert_eq!(explicit_2d_density_from(&[0.0; 4], eps), 1.0);
        assert!((explicit_2d_density_from(&[1.0, 0.0, 0.0, 0.0], eps) - (1.0 - 0.4 / PI)).abs() < 1e-15);
        assert!((explicit_2d_density_from(&[0.0, 0.0, 1.0, 0.0], eps) - (1.0 + (8.0 / PI - 4.0) * eps)).abs() < 1e-15);
        assert_eq!(substituted_2d_density_from(&[0.0; 4], eps), 1.0);
    }

    #[test]
    fn substituted_form_matches_potential_kernel_evaluation() {
        // With p0 uniform, J_{p0} = -a and both orientations agree.
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::new(
            2,
            vec![Atom::new(vec![0.3, -0.1, 0.2, -0.4], 0.25), Atom::new(vec![-0.1, 1.0 / 30.0, -0.2 / 3.0, 0.4 / 3.0], 0.75)],
        )
        .unwrap();
        let w = Window::for_model(vec![Site::origin(2), Site::new(&[1, 0])], &model).unwrap();
        let t = uniform_table(3);
        let d = first_order_density(&p0, 0.05, &model, &w, &t, Orientation::Literal, ExpansionKernel::Base).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let via_table = d.evaluate(&[a, b]);
                let closed = substituted_2d_density(&model, &[a, b], 0.05).unwrap();
                assert!((via_table - closed).abs() < 1e-9, "{via_table} vs {closed}");
            }
        }
    }

    #[test]
    fn velocity_coefficients_of_standard_model() {
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::standard_drift(2);
        let eps = 0.1;
        let p_star = annealed_kernel(&p0, eps, &model).unwrap().reversed();
        let t = j_kernel(&p_star, &crate::lattice::l1_ball(2, 1), 1e-9).unwrap();
        let v = velocity_coefficients(&p0, &model, eps, &t, Orientation::Reflected).unwrap();
        assert_eq!(v.d0, vec![0.0, 0.0]);
        assert_eq!(v.d1, vec![1.0, 0.0]);
        let k = |x: &Site| t.get(&x.neg()).unwrap();
        let want = 1.5 * (k(&Site::new(&[1, 0])) - k(&Site::new(&[-1, 0])));
        assert!((v.d2[0] - want).abs() < 1e-12);
        assert!(v.d2[1].abs() < 1e-12);
        assert!(v.d2[0] < 0.0);
    }

    #[test]
    fn deterministic_model_has_no_second_order() {
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::new(2, vec![Atom::new(vec![0.5, -0.5, 0.0, 0.0], 1.0)]).unwrap();
        let p_star = annealed_kernel(&p0, 0.1, &model).unwrap().reversed();
        let t = j_kernel(&p_star, &[Site::new(&[1, 0])], 1e-8).unwrap();
        let v = velocity_coefficients(&p0, &model, 0.1, &t, Orientation::Literal).unwrap();
        assert!(v.d2.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn orientation_check_prefers_exact_identity() {
        let env = make_environment(
            TransitionKernel::uniform(2),
            0.08,
            PerturbationModel::standard_drift(2),
            17,
            Some(5),
        )
        .unwrap();
        let r = orientation_check(&env, 10_000).unwrap();
        assert_eq!(r.selected, Orientation::Reflected);
        assert!(r.reflected_error < 1e-10 * r.h1_max.max(1.0), "{r:?}");
        assert!(r.literal_error > 1e-3, "{r:?}");
    }
}
