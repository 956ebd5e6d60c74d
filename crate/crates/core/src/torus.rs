//! Exact finite-state realization of the environment seen from the walker.
//!
//! On a periodic environment of period `L` the environmental process is a
//! Markov chain on the `L^d` shifts of the torus, so its stationary law and
//! the terms of its perturbative expansion are finite linear solves.
//!
//! Densities are taken against the uniform measure on shifts: `h = N pi` with
//! `N = L^d`. Writing the quenched kernel as `P = P0 + eps A` with
//! `P0(x, x + e) = p_eps(e)` and `A(x, x + e) = xi_bar(x, e)`, stationarity
//! reads `(I - P0^T) h = eps A^T h`, whence `h_0 = 1` and
//! `(I - P0^T) h_{i+1} = A^T h_i` with `sum h_{i+1} = 0`.

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentField;
use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::{Direction, Site};
use crate::linalg::{CsrMatrix, PinnedSolver};
use crate::pattern::Window;
use crate::stats::CompensatedSum;

/// Default cap on the number of torus states.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Sites of `(Z / L Z)^d`, numbered in mixed radix with the first axis most
/// significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGeometry {
    pub dim: usize,
    pub period: u32,
}

impl TorusGeometry {
    pub fn new(dim: usize, period: u32, cap: usize) -> Result<Self> {
        if period < 2 {
            return Err(Error::Precondition("torus period must be at least 2".into()));
        }
        let states = (period as u128).pow(dim as u32);
        if states > cap as u128 {
            return Err(Error::TorusTooLarge { states: states.min(usize::MAX as u128) as usize, cap });
        }
        Ok(Self { dim, period })
    }

    pub fn n_states(&self) -> usize {
        (self.period as usize).pow(self.dim as u32)
    }

    pub fn index(&self, x: &Site) -> usize {
        let r = x.reduce(self.period);
        r.coords().iter().fold(0, |acc, &c| acc * self.period as usize + c as usize)
    }

    pub fn site(&self, mut idx: usize) -> Site {
        let l = self.period as usize;
        let mut c = vec![0i64; self.dim];
        for i in (0..self.dim).rev() {
            c[i] = (idx % l) as i64;
            idx /= l;
        }
        Site::new(&c)
    }

    /// Index of `x + e` for every site and direction.
    fn neighbours(&self) -> Vec<Vec<usize>> {
        (0..self.n_states())
            .map(|i| {
                let x = self.site(i);
                Direction::all(self.dim).map(|e| self.index(&x.step(e))).collect()
            })
            .collect()
    }
}

fn geometry_of(env: &EnvironmentField, cap: usize) -> Result<TorusGeometry> {
    let period = env
        .period()
        .ok_or_else(|| Error::Precondition("environment has no period; torus mode required".into()))?;
    TorusGeometry::new(env.dim(), period, cap)
}

/// `M = I - K^T` where `K(x, x + e) = kernel_at(x)(e)`. Row `j` of `M f`
/// reads `f(j) - sum_e K(j - e, j) f(j - e)`.
fn generator_transpose(
    geom: &TorusGeometry,
    neighbours: &[Vec<usize>],
    kernel_at: impl Fn(usize) -> Vec<f64>,
) -> CsrMatrix {
    let n = geom.n_states();
    let mut triplets = Vec::with_capacity(n * (2 * geom.dim + 1));
    for (i, nb) in neighbours.iter().enumerate() {
        triplets.push((i, i, 1.0));
        for (e, p) in kernel_at(i).into_iter().enumerate() {
            if p != 0.0 {
                triplets.push((nb[e], i, -p));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Exact stationary law of the environmental process on a periodic
/// environment, with its window marginal and the velocity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TorusOracle {
    pub geometry: TorusGeometry,
    pub window_sites: Vec<Site>,
    /// Stationary probability of each shift.
    pub pi: Vec<f64>,
    /// Exact `Q_B`: stationary pattern pmf on the window.
    pub q_window: Vec<f64>,
    /// Pattern pmf of the torus environment under uniform shifts.
    pub reference_window: Vec<f64>,
    /// `sum_x pi(x) d(x, omega)`.
    pub velocity: Vec<f64>,
    /// `max_j |(pi P - pi)_j|`.
    pub residual: f64,
}

impl TorusOracle {
    /// `N pi`, the density against the uniform measure on shifts.
    pub fn density(&self) -> Vec<f64> {
        let n = self.pi.len() as f64;
        self.pi.iter().map(|p| n * p).collect()
    }

    /// `Q_B / P_B` per pattern, `None` where the pattern does not occur.
    pub fn window_density_ratio(&self) -> Vec<Option<f64>> {
        self.q_window
            .iter()
            .zip(&self.reference_window)
            .map(|(q, r)| (*r > 0.0).then(|| q / r))
            .collect()
    }

    /// `sum_patterns Q(pattern) * drift at the pattern origin`; equals
    /// [`TorusOracle::velocity`] when the window contains the origin.
    pub fn pattern_velocity(&self, env: &EnvironmentField, window: &Window) -> Option<Vec<f64>> {
        let origin_slot = window.sites().iter().position(|s| s.l1_norm() == 0)?;
        let dim = env.dim();
        let mut acc = vec![CompensatedSum::new(); dim];
        for (p, q) in self.q_window.iter().enumerate() {
            if *q == 0.0 {
                continue;
            }
            let atoms = window.decode(p as u64);
            let drift = env.atom_drift(atoms[origin_slot]);
            for i in 0..dim {
                acc[i].add(q * drift[i]);
            }
        }
        Some(acc.iter().map(|a| a.value()).collect())
    }
}

/// Stationary distribution of the quenched torus chain by a linear solve.
pub fn torus_solve(env: &EnvironmentField, window: &Window) -> Result<TorusOracle> {
    torus_solve_with_cap(env, window, DEFAULT_STATE_CAP)
}

pub fn torus_solve_with_cap(env: &EnvironmentField, window: &Window, cap: usize) -> Result<TorusOracle> {
    let geom = geometry_of(env, cap)?;
    if window.dim() != geom.dim {
        return Err(Error::DimensionMismatch { expected: geom.dim, got: window.dim() });
    }
    let n = geom.n_states();
    let neighbours = geom.neighbours();
    let atoms: Vec<usize> = (0..n).map(|i| env.atom_index(&geom.site(i))).collect();
    let m = generator_transpose(&geom, &neighbours, |i| env.atom_kernel(atoms[i]).probs().to_vec());
    let raw = PinnedSolver::new(&m, 0)?.solve(&vec![0.0; n], 1.0)?;
    let total = crate::stats::sum(raw.iter().copied());
    let pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
    if pi.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Solver("stationary solve produced a negative mass".into()));
    }
    let residual = m.residual_inf(&pi, &vec![0.0; n]);

    let n_patterns = window.n_patterns() as usize;
    let mut q = vec![CompensatedSum::new(); n_patterns];
    let mut reference = vec![0.0; n_patterns];
    let mut vel = vec![CompensatedSum::new(); geom.dim];
    for (i, p) in pi.iter().enumerate() {
        let x = geom.site(i);
        let pat = window.pattern_at(env, &x) as usize;
        q[pat].add(*p);
        reference[pat] += 1.0 / n as f64;
        let d = env.atom_drift(atoms[i]);
        for (a, di) in vel.iter_mut().zip(d.iter()) {
            a.add(p * di);
        }
    }
    Ok(TorusOracle {
        geometry: geom,
        window_sites: window.sites().to_vec(),
        pi,
        q_window: q.iter().map(|s| s.value()).collect(),
        reference_window: reference,
        velocity: vel.iter().map(|s| s.value()).collect(),
        residual,
    })
}

/// Expansion terms `h_0..h_m` of the stationary density and the exact density
/// `N pi` it approximates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TorusExpansion {
    pub geometry: TorusGeometry,
    pub epsilon: f64,
    pub terms: Vec<Vec<f64>>,
    pub exact: Vec<f64>,
}

impl TorusExpansion {
    /// `sum_{i <= order} eps^i h_i`.
    pub fn reconstruct(&self, order: usize) -> Vec<f64> {
        let n = self.exact.len();
        (0..n)
            .map(|x| {
                let mut acc = CompensatedSum::new();
                let mut w = 1.0;
                for h in self.terms.iter().take(order + 1) {
                    acc.add(w * h[x]);
                    w *= self.epsilon;
                }
                acc.value()
            })
            .collect()
    }

    /// `max_x |N pi(x) - sum_{i <= order} eps^i h_i(x)|`.
    pub fn residual(&self, order: usize) -> f64 {
        self.reconstruct(order).iter().zip(&self.exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `xi_bar(x, e)` for every torus site.
pub fn centered_field(env: &EnvironmentField, geom: &TorusGeometry) -> Vec<Vec<f64>> {
    (0..geom.n_states()).map(|i| env.model().centered(env.atom_index(&geom.site(i))).to_vec()).collect()
}

pub fn torus_expansion_terms(env: &EnvironmentField, order: usize) -> Result<TorusExpansion> {
    torus_expansion_terms_with_cap(env, order, DEFAULT_STATE_CAP)
}

pub fn torus_expansion_terms_with_cap(
    env: &EnvironmentField,
    order: usize,
    cap: usize,
) -> Result<TorusExpansion> {
    let geom = geometry_of(env, cap)?;
    let n = geom.n_states();
    let neighbours = geom.neighbours();
    let p_eps = env.annealed_kernel();
    let m0 = generator_transpose(&geom, &neighbours, |_| p_eps.probs().to_vec());
    let solver = PinnedSolver::new(&m0, 0)?;
    let xi_bar = centered_field(env, &geom);
    let mut terms = vec![vec![1.0; n]];
    for _ in 0..order {
        let h = terms.last().unwrap();
        // (A^T h)(j) = sum_e xi_bar(j - e, e) h(j - e).
        let mut rhs = vec![CompensatedSum::new(); n];
        for (i, nb) in neighbours.iter().enumerate() {
            for (e, &j) in nb.iter().enumerate() {
                rhs[j].add(xi_bar[i][e] * h[i]);
            }
        }
        let rhs: Vec<f64> = rhs.iter().map(|s| s.value()).collect();
        let mut next = solver.solve(&rhs, 0.0)?;
        let mean = crate::stats::sum(next.iter().copied()) / n as f64;
        for v in next.iter_mut() {
            *v -= mean;
        }
        terms.push(next);
    }
    let window = Window::new(vec![Site::origin(geom.dim)], env.model().n_atoms())?;
    let exact = torus_solve_with_cap(env, &window, cap)?.density();
    Ok(TorusExpansion { geometry: geom, epsilon: env.epsilon(), terms, exact })
}

/// Centered kernel of `kernel` on the torus: the solution of
/// `J(x) - sum_e p(e) J(x + e) = delta_{x,0} - 1/N` with `J(0) = 0`.
pub fn torus_j_kernel(kernel: &TransitionKernel, period: u32, cap: usize) -> Result<Vec<f64>> {
    let geom = TorusGeometry::new(kernel.dim(), period, cap)?;
    let n = geom.n_states();
    let neighbours = geom.neighbours();
    let mut triplets = Vec::with_capacity(n * (2 * geom.dim + 1));
    for (i, nb) in neighbours.iter().enumerate() {
        triplets.push((i, i, 1.0));
        for (e, &j) in nb.iter().enumerate() {
            let p = kernel.probs()[e];
            if p != 0.0 {
                triplets.push((i, j, -p));
            }
        }
    }
    let m = CsrMatrix::from_triplets(n, n, triplets);
    let mut rhs = vec![-1.0 / n as f64; n];
    rhs[0] += 1.0;
    PinnedSolver::new(&m, 0)?.solve(&rhs, 0.0)
}
