//! Quenched walks in a fixed environment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentField;
use crate::error::{Error, Result};
use crate::lattice::{Direction, Site};
use crate::pattern::{PatternIndex, Window};
use crate::rng::{walk_rng, WalkRng};

/// Default cap on the number of steps of a single exit-time run.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

/// Position, step counter and generator of one walker.
#[derive(Clone, Debug)]
pub struct WalkState {
    pub position: Site,
    pub step: u64,
    rng: WalkRng,
}

impl WalkState {
    pub fn new(start: Site, seed: u64) -> Self {
        Self { position: start, step: 0, rng: walk_rng(seed) }
    }

    /// Draw a neighbour from `omega(X_n, .)` and move there.
    #[inline]
    pub fn advance(&mut self, env: &EnvironmentField) -> Direction {
        let atom = env.atom_index(&self.position);
        self.advance_from_atom(env, atom)
    }

    #[inline]
    fn advance_from_atom(&mut self, env: &EnvironmentField, atom: usize) -> Direction {
        let u: f64 = self.rng.random();
        let cdf = env.atom_cdf(atom);
        let i = cdf.iter().position(|&c| u < c).expect("cdf ends at +inf");
        let dir = Direction::new(i);
        self.position = self.position.step(dir);
        self.step += 1;
        dir
    }

    pub(crate) fn rng_mut(&mut self) -> &mut WalkRng {
        &mut self.rng
    }
}

/// One transition of the walk, leaving `state` untouched.
pub fn step(env: &EnvironmentField, state: &WalkState) -> WalkState {
    let mut next = state.clone();
    next.advance(env);
    next
}

/// Transverse half-width factor of the slab box: `70 L^3`.
pub const TRANSVERSE_FACTOR: f64 = 70.0;

/// Interior margin for boxes with a non-axis direction.
pub const BOX_MARGIN: f64 = 1e-9;

/// The box `R((-L, L) x (-70 L^3, 70 L^3)^(d-1))`, where `R e1 = l`.
///
/// The box is never materialized; membership is a coordinate test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabBox {
    direction: Vec<f64>,
    half_width: f64,
    transverse: f64,
    /// Row-major orthonormal matrix mapping `e1` to `l` (a Householder
    /// reflection, hence symmetric and its own inverse).
    rotation: Vec<f64>,
    /// `(axis, sign)` when `l = sign * e_axis`; membership is then exact.
    axis: Option<(usize, i64)>,
}

impl SlabBox {
    pub fn new(direction: &[f64], half_width: f64) -> Result<Self> {
        let d = direction.len();
        if d == 0 || d > crate::lattice::MAX_DIM {
            return Err(Error::UnsupportedDimension(d));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Precondition(format!("box size must be positive, got {half_width}")));
        }
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Precondition("box direction must be a nonzero vector".into()));
        }
        let l: Vec<f64> = direction.iter().map(|x| x / norm).collect();
        let axis = {
            let nonzero: Vec<usize> = (0..d).filter(|&i| direction[i] != 0.0).collect();
            (nonzero.len() == 1).then(|| {
                let i = nonzero[0];
                (i, if direction[i] > 0.0 { 1 } else { -1 })
            })
        };
        let mut rotation = vec![0.0; d * d];
        for i in 0..d {
            rotation[i * d + i] = 1.0;
        }
        let mut v = l.iter().map(|x| -x).collect::<Vec<_>>();
        v[0] += 1.0;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            for i in 0..d {
                for j in 0..d {
                    rotation[i * d + j] -= 2.0 * v[i] * v[j] / vv;
                }
            }
        }
        Ok(Self {
            direction: l,
            half_width,
            transverse: TRANSVERSE_FACTOR * half_width.powi(3),
            rotation,
            axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn transverse_half_width(&self) -> f64 {
        self.transverse
    }

    /// Entry `(i, j)` of the rotation.
    pub fn rotation(&self, i: usize, j: usize) -> f64 {
        self.rotation[i * self.dim() + j]
    }

    /// `x . l`.
    pub fn longitudinal(&self, x: &Site) -> f64 {
        match self.axis {
            Some((a, s)) => (s * x.coord(a)) as f64,
            None => x.dot(&self.direction),
        }
    }

    /// Coordinates of `x` in the box frame, `R^-1 x`.
    pub fn box_coordinates(&self, x: &Site) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.rotation[j * d + i] * x.coord(j) as f64).sum()).collect()
    }

    pub fn contains(&self, x: &Site) -> bool {
        match self.axis {
            Some((a, s)) => {
                let long = (s * x.coord(a)) as f64;
                long.abs() < self.half_width
                    && x.coords()
                        .iter()
                        .enumerate()
                        .all(|(i, &c)| i == a || (c.abs() as f64) < self.transverse)
            }
            None => {
                let y = self.box_coordinates(x);
                y[0].abs() < self.half_width - BOX_MARGIN
                    && y[1..].iter().all(|t| t.abs() < self.transverse - BOX_MARGIN)
            }
        }
    }

    /// Side through which a point outside the box left it.
    pub fn exit_side(&self, x: &Site) -> ExitSide {
        let margin = if self.axis.is_some() { 0.0 } else { BOX_MARGIN };
        let long = self.longitudinal(x);
        if long >= self.half_width - margin {
            ExitSide::Front
        } else if long <= -self.half_width + margin {
            ExitSide::Back
        } else {
            ExitSide::Lateral
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitSide {
    Front,
    Back,
    Lateral,
    /// The run hit its step cap inside the box.
    Censored,
}

impl ExitSide {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitSide::Front => "front",
            ExitSide::Back => "back",
            ExitSide::Lateral => "lateral",
            ExitSide::Censored => "censored",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub position: Site,
    pub step: u64,
    pub side: ExitSide,
}

impl ExitRecord {
    pub fn front(&self) -> bool {
        self.side == ExitSide::Front
    }

    pub fn censored(&self) -> bool {
        self.side == ExitSide::Censored
    }
}

/// Runs `walker` until it leaves `slab` or `max_steps` transitions have been
/// made. Censoring is reported through [`ExitSide::Censored`].
pub fn run_until_exit(
    env: &EnvironmentField,
    slab: &SlabBox,
    walker: &mut WalkState,
    max_steps: u64,
) -> Result<ExitRecord> {
    if slab.dim() != env.dim() {
        return Err(Error::DimensionMismatch { expected: env.dim(), got: slab.dim() });
    }
    if !slab.contains(&walker.position) {
        return Err(Error::Precondition(format!("start {} is not inside the box", walker.position)));
    }
    let start_step = walker.step;
    while walker.step - start_step < max_steps {
        walker.advance(env);
        if !slab.contains(&walker.position) {
            return Ok(ExitRecord {
                position: walker.position,
                step: walker.step - start_step,
                side: slab.exit_side(&walker.position),
            });
        }
    }
    Ok(ExitRecord { position: walker.position, step: max_steps, side: ExitSide::Censored })
}

/// Patterns of `t_{X_k} omega` on `window` for `k = 0..=n`.
pub fn environmental_trajectory(
    env: &EnvironmentField,
    start: Site,
    n: u64,
    window: &Window,
    walk_seed: u64,
) -> Vec<PatternIndex> {
    let mut walker = WalkState::new(start, walk_seed);
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(window.pattern_at(env, &walker.position));
    for _ in 0..n {
        walker.advance(env);
        out.push(window.pattern_at(env, &walker.position));
    }
    out
}

/// Geometric killing time with `P(tau = k) = delta^k (1 - delta)`.
pub fn sample_killing_time(rng: &mut WalkRng, delta: f64) -> u64 {
    let u = 1.0 - rng.random::<f64>();
    let t = (u.ln() / delta.ln()).floor();
    if t.is_finite() && t >= 0.0 {
        t.min(u64::MAX as f64) as u64
    } else {
        0
    }
}

/// A trajectory `X_0..X_tau` stopped at an independent geometric time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KilledTrajectory {
    pub path: Vec<Site>,
    pub delta: f64,
    pub tau: u64,
}

pub fn killed_run(
    env: &EnvironmentField,
    delta: f64,
    start: Site,
    walk_seed: u64,
) -> Result<KilledTrajectory> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("delta must lie in (0,1), got {delta}")));
    }
    let mut walker = WalkState::new(start, walk_seed);
    let tau = sample_killing_time(walker.rng_mut(), delta);
    let mut path = Vec::with_capacity(tau as usize + 1);
    path.push(walker.position);
    for _ in 0..tau {
        walker.advance(env);
        path.push(walker.position);
    }
    Ok(KilledTrajectory { path, delta, tau })
}
