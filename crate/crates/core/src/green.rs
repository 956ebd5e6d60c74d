//! n-step probabilities, Green functions and the centered kernel `J_p`.
//!
//! All tables are indexed by `x` with `G(x, 0) = sum_n p_n(x, 0)` and
//! `J_p(x) = sum_k (p_k(0, -x) - p_k(0, 0))`. Two routes are used:
//!
//! * kernels with nonzero drift: exact dynamic programming of `p_k(0, .)` on
//!   a finite box whose far faces absorb, with a certified bound on the mass
//!   that could still return (exponential martingale along the drift);
//! * driftless kernels: exact dynamic programming on a box large enough that
//!   leakage is negligible, followed by Richardson extrapolation of the
//!   partial sums sampled on a doubling grid. Abel means are reported as an
//!   independent diagnostic.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::{l1_ball, Direction, Site, MAX_DIM};
use crate::linalg::{solve, CsrMatrix};
use crate::series::{abel_extrapolate, Richardson};
use crate::stats::CompensatedSum;

/// Largest number of cells allowed in a dynamic-programming box.
pub const MAX_CELLS: usize = 8_000_000;

/// Largest `(n + 1) * |ball|` stored by [`n_step_probs`].
pub const MAX_STEP_TABLE: usize = 50_000_000;

/// Rounding allowance added to extrapolated truncation bounds.
const ROUNDING_FLOOR: f64 = 1e-12;

/// Axis-aligned box `[lo, hi]` with a one-cell ghost layer, stored densely.
#[derive(Clone, Debug)]
struct Region {
    dim: usize,
    /// Lowest coordinate of the padded array along each axis.
    origin: [i64; MAX_DIM],
    shape: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    len: usize,
    inside: Vec<bool>,
    ghosts: Vec<usize>,
}

impl Region {
    /// Cells of the box `[lo, hi]` satisfying `member` are live; every other
    /// cell adjacent to a live cell is a ghost that absorbs.
    fn new(lo: &[i64], hi: &[i64], member: impl Fn(&Site) -> bool) -> Result<Self> {
        let dim = lo.len();
        let mut origin = [0; MAX_DIM];
        let mut shape = [1; MAX_DIM];
        let mut strides = [0; MAX_DIM];
        let mut len: usize = 1;
        for i in (0..dim).rev() {
            origin[i] = lo[i] - 1;
            shape[i] = (hi[i] - lo[i] + 3) as usize;
            strides[i] = len;
            len = len.checked_mul(shape[i]).filter(|&l| l <= MAX_CELLS).ok_or_else(|| {
                Error::Precondition(format!("box {lo:?}..{hi:?} exceeds {MAX_CELLS} cells"))
            })?;
        }
        let mut region =
            Region { dim, origin, shape, strides, len, inside: vec![false; len], ghosts: Vec::new() };
        for idx in 0..len {
            let x = region.site(idx);
            let interior = (0..dim).all(|i| x.coord(i) >= lo[i] && x.coord(i) <= hi[i]);
            region.inside[idx] = interior && member(&x);
        }
        let offsets = region.offsets();
        let mut is_ghost = vec![false; len];
        for idx in 0..len {
            if region.inside[idx] {
                for off in &offsets[..2 * dim] {
                    let j = (idx as isize + off) as usize;
                    if !region.inside[j] {
                        is_ghost[j] = true;
                    }
                }
            }
        }
        region.ghosts = (0..len).filter(|&j| is_ghost[j]).collect();
        Ok(region)
    }

    fn index(&self, x: &Site) -> Option<usize> {
        let mut idx = 0;
        for i in 0..self.dim {
            let c = x.coord(i) - self.origin[i];
            if c < 0 || c >= self.shape[i] as i64 {
                return None;
            }
            idx += c as usize * self.strides[i];
        }
        Some(idx)
    }

    fn site(&self, mut idx: usize) -> Site {
        let mut c = [0i64; MAX_DIM];
        for i in 0..self.dim {
            c[i] = (idx / self.strides[i]) as i64 + self.origin[i];
            idx %= self.strides[i];
        }
        Site::new(&c[..self.dim])
    }

    fn offsets(&self) -> [isize; 2 * MAX_DIM] {
        let mut off = [0isize; 2 * MAX_DIM];
        for i in 0..self.dim {
            off[2 * i] = self.strides[i] as isize;
            off[2 * i + 1] = -(self.strides[i] as isize);
        }
        off
    }
}

/// One transition of the mass vector; returns the mass absorbed by ghosts
/// together with its `weight`-weighted total.
struct Propagator<'a> {
    region: &'a Region,
    moves: Vec<(isize, f64)>,
    reach: usize,
    active: (usize, usize),
}

impl<'a> Propagator<'a> {
    fn new(region: &'a Region, kernel: &TransitionKernel, start: usize) -> Self {
        let offsets = region.offsets();
        let moves: Vec<(isize, f64)> = kernel
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, p)| (offsets[i], *p))
            .collect();
        let reach = moves.iter().map(|(o, _)| o.unsigned_abs()).max().unwrap_or(0);
        Self { region, moves, reach, active: (start, start + 1) }
    }

    fn step(&mut self, src: &[f64], dst: &mut [f64], weight: Option<&[f64]>) -> (f64, f64) {
        let (a, b) = self.active;
        let lo = a.saturating_sub(self.reach);
        let hi = (b + self.reach).min(self.region.len);
        dst[lo..hi].fill(0.0);
        for i in a..b {
            let v = src[i];
            if v == 0.0 {
                continue;
            }
            for &(off, p) in &self.moves {
                dst[(i as isize + off) as usize] += p * v;
            }
        }
        let mut leaked = CompensatedSum::new();
        let mut weighted = CompensatedSum::new();
        for &g in &self.region.ghosts {
            if g >= lo && g < hi && dst[g] != 0.0 {
                leaked.add(dst[g]);
                if let Some(w) = weight {
                    weighted.add(dst[g] * w[g]);
                }
                dst[g] = 0.0;
            }
        }
        self.active = (lo, hi);
        (leaked.value(), weighted.value())
    }
}

/// `p_k(0, y)` for `k <= n` and `|y|_1 <= radius`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepTable {
    pub kernel: TransitionKernel,
    pub radius: i64,
    pub points: Vec<Site>,
    /// `values[k][j]` is `p_k(0, points[j])`.
    pub values: Vec<Vec<f64>>,
    /// Mass that left the ball during the first `k` steps (cumulative).
    pub leaked: Vec<f64>,
}

impl StepTable {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, k: usize, y: &Site) -> Option<f64> {
        let j = self.points.binary_search(y).ok()?;
        self.values.get(k).map(|row| row[j])
    }

    /// Tabulated mass at step `k`.
    pub fn mass(&self, k: usize) -> f64 {
        crate::stats::sum(self.values[k].iter().copied())
    }
}

/// Exact convolution powers of `kernel` restricted to the `l1` ball of the
/// given radius. Mass leaving the ball is removed and reported; when
/// `radius >= n` nothing leaks.
pub fn n_step_probs(kernel: &TransitionKernel, n: usize, radius: i64) -> Result<StepTable> {
    if radius < 0 {
        return Err(Error::Precondition("radius must be non-negative".into()));
    }
    let dim = kernel.dim();
    let points = l1_ball(dim, radius);
    if (n + 1).saturating_mul(points.len()) > MAX_STEP_TABLE {
        return Err(Error::Precondition(format!(
            "table of {} steps on {} points exceeds the storage cap",
            n + 1,
            points.len()
        )));
    }
    let lo = vec![-radius; dim];
    let hi = vec![radius; dim];
    let region = Region::new(&lo, &hi, |x| x.l1_norm() <= radius)?;
    let idx: Vec<usize> = points.iter().map(|p| region.index(p).unwrap()).collect();
    let start = region.index(&Site::origin(dim)).unwrap();
    let mut prop = Propagator::new(&region, kernel, start);
    let mut cur = vec![0.0; region.len];
    let mut next = vec![0.0; region.len];
    cur[start] = 1.0;
    let mut values = Vec::with_capacity(n + 1);
    let mut leaked = Vec::with_capacity(n + 1);
    let mut total_leak = CompensatedSum::new();
    values.push(idx.iter().map(|&i| cur[i]).collect());
    leaked.push(0.0);
    for _ in 0..n {
        let (l, _) = prop.step(&cur, &mut next, None);
        std::mem::swap(&mut cur, &mut next);
        total_leak.add(l);
        values.push(idx.iter().map(|&i| cur[i]).collect());
        leaked.push(total_leak.value());
    }
    Ok(StepTable { kernel: kernel.clone(), radius, points, values, leaked })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenMethod {
    /// Time-stepped box with certified tail bound.
    AbsorbingBox,
    /// Richardson extrapolation of exact partial sums.
    Extrapolated,
    /// Contour integral in `theta1`, tanh-sinh quadrature in `theta2`
    /// (planar kernels); the bound is an a posteriori quadrature estimate.
    Fourier,
}

/// Diagnostics of the drifted route.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDiagnostics {
    /// Exponent `lambda` with `sum_e p(e) exp(-lambda e.u) = 1`, `u` the unit
    /// drift; infinite when no step goes backwards.
    pub lambda_star: f64,
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    pub steps: usize,
    /// Weighted mass absorbed by the far faces.
    pub leaked_bound: f64,
    /// Weighted mass still inside the box.
    pub remaining_bound: f64,
    pub attempts: usize,
}

/// Green function `G(x, 0)` on an `l1` ball around the origin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenTable {
    pub kernel: TransitionKernel,
    pub radius: i64,
    pub points: Vec<Site>,
    pub values: Vec<f64>,
    /// Bound on `|G_table(x, 0) - G(x, 0)|` for every tabulated point.
    pub truncation_bound: f64,
    /// Number of time steps summed (largest partial sum for the
    /// extrapolated route).
    pub terms: usize,
    pub method: GreenMethod,
    pub box_diagnostics: Option<BoxDiagnostics>,
}

impl GreenTable {
    pub fn get(&self, x: &Site) -> Option<f64> {
        self.points.binary_search(x).ok().map(|j| self.values[j])
    }

    /// `max |G(x) - delta_{x,0} - sum_e p(e) G(x + e)|` over points whose
    /// neighbours are tabulated.
    pub fn resolvent_residual(&self) -> f64 {
        resolvent_residual(&self.kernel, &self.points, &self.values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# format=rwre-green-v1")?;
        writeln!(w, "# kernel={}", self.kernel)?;
        writeln!(w, "# radius={}", self.radius)?;
        writeln!(w, "# method={:?}", self.method)?;
        writeln!(w, "# terms={}", self.terms)?;
        writeln!(w, "# truncation_bound={:e}", self.truncation_bound)?;
        write_table_rows(&mut w, &self.points, &self.values, "green")
    }
}

fn write_table_rows<W: Write>(w: &mut W, points: &[Site], values: &[f64], name: &str) -> io::Result<()> {
    let dim = points.first().map_or(0, |p| p.dim());
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},{name}", header.join(","))?;
    for (p, v) in points.iter().zip(values) {
        let coords: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
        writeln!(w, "{},{v:.17e}", coords.join(","))?;
    }
    Ok(())
}

fn resolvent_residual(kernel: &TransitionKernel, points: &[Site], values: &[f64]) -> f64 {
    let lookup = |x: &Site| points.binary_search(x).ok().map(|j| values[j]);
    let mut worst: f64 = 0.0;
    for (x, v) in points.iter().zip(values) {
        let mut acc = CompensatedSum::new();
        acc.add(*v);
        if x.l1_norm() == 0 {
            acc.add(-1.0);
        }
        let mut complete = true;
        for e in Direction::all(kernel.dim()) {
            let p = kernel.prob(e);
            if p == 0.0 {
                continue;
            }
            match lookup(&x.step(e)) {
                Some(g) => acc.add(-p * g),
                None => complete = false,
            }
        }
        if complete {
            worst = worst.max(acc.value().abs());
        }
    }
    worst
}

fn table_radius(points: &[Site], dim: usize) -> Result<i64> {
    if dim < 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let mut r = 0;
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
        }
        r = r.max(p.l1_norm());
    }
    Ok(r + 1)
}

fn drift_of(kernel: &TransitionKernel) -> (Vec<f64>, f64) {
    let d = kernel.local_drift();
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    (d, norm)
}

/// Drift is treated as zero below this norm.
const DRIFT_EPS: f64 = 1e-14;

/// Positive root of `sum_e p(e) exp(-lambda e.u) = 1`.
pub fn lundberg_exponent(kernel: &TransitionKernel, u: &[f64]) -> f64 {
    let dim = kernel.dim();
    let steps: Vec<(f64, f64)> = Direction::all(dim)
        .filter(|e| kernel.prob(*e) > 0.0)
        .map(|e| (kernel.prob(e), e.sign() as f64 * u[e.axis()]))
        .collect();
    if steps.iter().all(|(_, s)| *s >= 0.0) {
        return f64::INFINITY;
    }
    let phi = |l: f64| steps.iter().map(|(p, s)| p * (-l * s).exp()).sum::<f64>() - 1.0;
    let mut hi = 1.0;
    while phi(hi) <= 0.0 {
        hi *= 2.0;
    }
    // phi is convex, vanishes at 0 and decreases there: phi <= 0 exactly on
    // [0, root].
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Initial box geometry of the drifted route.
struct BoxPlan {
    /// Unit drift.
    u: Vec<f64>,
    lambda: f64,
    /// Extent along the drift.
    forward: f64,
    /// Extent across it and backwards.
    width: f64,
    /// Expected number of time steps.
    steps: f64,
}

fn box_plan(kernel: &TransitionKernel, targets: &[Site], tol: f64) -> BoxPlan {
    let dim = kernel.dim();
    let (d, speed) = drift_of(kernel);
    let u: Vec<f64> = d.iter().map(|x| x / speed).collect();
    let lambda = lundberg_exponent(kernel, &u);
    let r = targets.iter().map(|t| t.linf_norm()).max().unwrap_or(0);
    let log_tol = (20.0 / tol).ln().max(1.0);
    let reach = if lambda.is_finite() { (log_tol / lambda).ceil() } else { 0.0 };
    let sigma = (0..dim)
        .map(|i| kernel.prob(Direction::along(i, true)) + kernel.prob(Direction::along(i, false)))
        .fold(0.0, f64::max)
        .sqrt();
    let forward = reach + r as f64 + 2.0;
    let t_est = (2.0 * reach + r as f64 + 2.0) / speed;
    let width = (reach + r as f64 + 2.0)
        .max((2.0 * log_tol).sqrt() * sigma * t_est.sqrt() + r as f64 + 2.0)
        .ceil();
    BoxPlan { u, lambda, forward, width, steps: t_est }
}

/// Cell updates the drifted route is expected to need.
fn box_cost(kernel: &TransitionKernel, targets: &[Site], tol: f64) -> f64 {
    let plan = box_plan(kernel, targets, tol);
    let side = 2.0 * plan.width + plan.forward;
    side.powi(kernel.dim() as i32) * plan.steps
}

/// Above this many cell updates, planar centered kernels use the Fourier
/// route instead of time stepping.
const FOURIER_SWITCH_COST: f64 = 2e9;

struct BoxSums {
    values: Vec<f64>,
    bound: f64,
    steps: usize,
    diagnostics: BoxDiagnostics,
}

/// `H(y) = sum_k p_k(0, y)` on `targets` for a drifted kernel, with
/// `|H_table - H| <= bound`.
fn drifted_sums(kernel: &TransitionKernel, targets: &[Site], tol: f64) -> Result<BoxSums> {
    let dim = kernel.dim();
    let BoxPlan { u, lambda, mut forward, mut width, .. } = box_plan(kernel, targets, tol);
    let speed = drift_of(kernel).1;
    let a_max = targets.iter().map(|t| t.dot(&u)).fold(f64::NEG_INFINITY, f64::max);
    let mut best = f64::INFINITY;
    for attempt in 1..=8 {
        let lo: Vec<i64> =
            (0..dim).map(|i| -(width + (forward * (-u[i]).max(0.0)).ceil()) as i64).collect();
        let hi: Vec<i64> =
            (0..dim).map(|i| (width + (forward * u[i].max(0.0)).ceil()) as i64).collect();
        let region = match Region::new(&lo, &hi, |_| true) {
            Ok(r) => r,
            Err(_) => break,
        };
        let weight: Vec<f64> = (0..region.len)
            .map(|i| {
                let excess = region.site(i).dot(&u) - a_max;
                if lambda.is_finite() {
                    (-lambda * excess).exp().min(1.0)
                } else if excess > 0.0 {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        let idx: Vec<usize> = targets.iter().map(|t| region.index(t).unwrap()).collect();
        let start = region.index(&Site::origin(dim)).unwrap();
        let mut prop = Propagator::new(&region, kernel, start);
        let mut cur = vec![0.0; region.len];
        let mut next = vec![0.0; region.len];
        cur[start] = 1.0;
        let mut sums: Vec<CompensatedSum> = vec![CompensatedSum::new(); targets.len()];
        let mut leaked_w = CompensatedSum::new();
        let max_steps = (8.0 * (forward + width) / speed) as usize + 4000;
        let mut steps = 0;
        let outcome = loop {
            for (s, &i) in sums.iter_mut().zip(&idx) {
                s.add(cur[i]);
            }
            if steps % 16 == 0 || steps == max_steps {
                let (a, b) = prop.active;
                let remaining: f64 = crate::stats::sum((a..b).map(|i| cur[i] * weight[i]));
                let leak = leaked_w.value();
                let g0 = sums[0].value();
                let total = leak + remaining;
                let bound = if total < 1.0 { total * g0 / (1.0 - total) } else { f64::INFINITY };
                best = best.min(bound);
                if bound <= tol {
                    break Some((bound, leak, remaining));
                }
                let leak_only = if leak < 1.0 { leak * g0 / (1.0 - leak) } else { f64::INFINITY };
                if leak_only > 0.5 * tol || steps >= max_steps {
                    break None;
                }
            }
            let (_, w) = prop.step(&cur, &mut next, Some(&weight));
            leaked_w.add(w);
            std::mem::swap(&mut cur, &mut next);
            steps += 1;
        };
        if let Some((bound, leak, remaining)) = outcome {
            return Ok(BoxSums {
                values: sums.iter().map(|s| s.value()).collect(),
                bound,
                steps,
                diagnostics: BoxDiagnostics {
                    lambda_star: lambda,
                    lower: lo,
                    upper: hi,
                    steps,
                    leaked_bound: leak,
                    remaining_bound: remaining,
                    attempts: attempt,
                },
            });
        }
        forward = (forward * 1.5).ceil();
        width = (width * 1.5).ceil();
    }
    Err(Error::Budget { tol, achieved: best })
}

/// Partial sums `H_n(y) = sum_{k <= n} p_k(0, y)` of a driftless kernel at
/// `n` in `checkpoints` (a doubling grid), plus Abel means of the centered
/// series for `abel_targets`.
struct PartialSums {
    checkpoints: Vec<usize>,
    /// `sums[c][j]` is `H_{checkpoints[c]}(targets[j])`.
    sums: Vec<Vec<f64>>,
    total_leaked: f64,
    abel_s: Vec<f64>,
    /// `abel[t][m]`: Abel mean at `abel_s[m]` of `sum_k s^k (p_k(0, y_t) - p_k(0, 0))`.
    abel: Vec<Vec<f64>>,
}

fn driftless_partial_sums(
    kernel: &TransitionKernel,
    targets: &[Site],
    abel_targets: &[Site],
) -> Result<PartialSums> {
    let dim = kernel.dim();
    let r = targets.iter().map(|t| t.linf_norm()).max().unwrap_or(0);
    let sig: Vec<f64> = (0..dim)
        .map(|i| kernel.prob(Direction::along(i, true)) + kernel.prob(Direction::along(i, false)))
        .map(f64::sqrt)
        .collect();
    let extent = |n: usize| -> Vec<i64> {
        sig.iter().map(|s| (8.0 * s * (n as f64).sqrt()).ceil() as i64 + r + 2).collect()
    };
    let cells = |ext: &[i64]| ext.iter().map(|e| (2 * e + 3) as f64).product::<f64>();
    let mut n_max = 1024;
    while cells(&extent(n_max)) > MAX_CELLS as f64 {
        if n_max <= 64 {
            return Err(Error::Precondition(format!("kernel spreads too fast for a {MAX_CELLS}-cell box")));
        }
        n_max /= 2;
    }
    let ext = extent(n_max);
    let lo: Vec<i64> = ext.iter().map(|e| -e).collect();
    let region = Region::new(&lo, &ext, |_| true)?;
    let idx: Vec<usize> = targets.iter().map(|t| region.index(t).unwrap()).collect();
    let abel_idx: Vec<usize> = abel_targets.iter().map(|t| region.index(t).unwrap()).collect();
    let start = region.index(&Site::origin(dim)).unwrap();
    let checkpoints: Vec<usize> = (0..5).map(|j| (n_max >> 4) << j).collect();
    let abel_s: Vec<f64> =
        (1..).map(|j| 1.0 - 0.5f64.powi(j)).take_while(|s| (1.0 - s) * (n_max as f64) >= 16.0).collect();
    let mut abel = vec![vec![CompensatedSum::new(); abel_s.len()]; abel_targets.len()];
    let mut powers = vec![1.0; abel_s.len()];

    let mut prop = Propagator::new(&region, kernel, start);
    let mut cur = vec![0.0; region.len];
    let mut next = vec![0.0; region.len];
    cur[start] = 1.0;
    let mut acc = vec![CompensatedSum::new(); targets.len()];
    let mut sums = Vec::with_capacity(checkpoints.len());
    let mut leaked = CompensatedSum::new();
    for k in 0..=n_max {
        for (a, &i) in acc.iter_mut().zip(&idx) {
            a.add(cur[i]);
        }
        let p0 = cur[start];
        for (t, &i) in abel_idx.iter().enumerate() {
            for (m, w) in powers.iter().enumerate() {
                abel[t][m].add(w * (cur[i] - p0));
            }
        }
        for (w, s) in powers.iter_mut().zip(&abel_s) {
            *w *= s;
        }
        if checkpoints.contains(&k) {
            sums.push(acc.iter().map(|a| a.value()).collect());
        }
        if k < n_max {
            let (l, _) = prop.step(&cur, &mut next, None);
            leaked.add(l);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    Ok(PartialSums {
        checkpoints,
        sums,
        total_leaked: leaked.value(),
        abel_s,
        abel: abel.into_iter().map(|row| row.iter().map(|a| a.value()).collect()).collect(),
    })
}

/// Number of axes along which the kernel moves.
fn effective_dim(kernel: &TransitionKernel) -> usize {
    (0..kernel.dim())
        .filter(|&i| {
            kernel.prob(Direction::along(i, true)) + kernel.prob(Direction::along(i, false)) > 0.0
        })
        .count()
}

/// Green function `G(x, 0)` of a transient kernel on the `l1` ball covering
/// `points` (plus one layer for the resolvent check).
pub fn green(kernel: &TransitionKernel, points: &[Site], tol: f64) -> Result<GreenTable> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let dim = kernel.dim();
    let radius = table_radius(points, dim)?;
    let ball = l1_ball(dim, radius);
    let targets: Vec<Site> = ball.iter().map(|x| x.neg()).collect();
    let (_, speed) = drift_of(kernel);
    if speed > DRIFT_EPS {
        let mut ordered = vec![Site::origin(dim)];
        ordered.extend(targets.iter().copied());
        let sums = drifted_sums(kernel, &ordered, tol)?;
        return Ok(GreenTable {
            kernel: kernel.clone(),
            radius,
            points: ball,
            values: sums.values[1..].to_vec(),
            truncation_bound: sums.bound,
            terms: sums.steps,
            method: GreenMethod::AbsorbingBox,
            box_diagnostics: Some(sums.diagnostics),
        });
    }
    let d_eff = effective_dim(kernel);
    if d_eff <= 2 {
        return Err(Error::RecurrentKernel);
    }
    let ps = driftless_partial_sums(kernel, &targets, &[])?;
    let base = d_eff as f64 / 2.0 - 1.0;
    let exponents: Vec<f64> = (0..4).map(|j| base + j as f64).collect();
    let n_max = *ps.checkpoints.last().unwrap();
    let leak_term = (n_max as f64 + 1.0) * ps.total_leaked;
    let mut bound: f64 = 0.0;
    let values: Vec<f64> = (0..targets.len())
        .map(|j| {
            let seq: Vec<f64> = ps.sums.iter().map(|row| row[j]).collect();
            let r = Richardson::new(&seq, 2.0, &exponents);
            bound = bound.max(2.0 * r.error_estimate());
            r.estimate()
        })
        .collect();
    Ok(GreenTable {
        kernel: kernel.clone(),
        radius,
        points: ball,
        values,
        truncation_bound: bound + leak_term + ROUNDING_FLOOR,
        terms: n_max,
        method: GreenMethod::Extrapolated,
        box_diagnostics: None,
    })
}

/// Convergence status of a [`JTable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum JStatus {
    Converged,
    /// The extrapolation did not stabilize within the requested tolerance.
    Flagged { reason: String },
}

/// Per-point record of the extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JPointDiagnostics {
    pub point: Site,
    /// Partial sums `S_n(x)` at the checkpoints.
    pub partial_sums: Vec<f64>,
    /// Last entry of each Richardson level, raw to most extrapolated.
    pub extrapolants: Vec<f64>,
    pub abel_s: Vec<f64>,
    pub abel_means: Vec<f64>,
    /// Three-point fit of the last Abel means.
    pub abel_estimate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JDiagnostics {
    pub checkpoints: Vec<usize>,
    pub exponents: Vec<f64>,
    pub leaked_mass: f64,
    pub points: Vec<JPointDiagnostics>,
}

/// `J_p(x)` on an `l1` ball covering the requested points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JTable {
    pub kernel: TransitionKernel,
    pub radius: i64,
    pub points: Vec<Site>,
    pub values: Vec<f64>,
    pub truncation_bound: f64,
    pub tol: f64,
    pub method: GreenMethod,
    pub status: JStatus,
    pub diagnostics: Option<JDiagnostics>,
    pub box_diagnostics: Option<BoxDiagnostics>,
}

impl JTable {
    pub fn get(&self, x: &Site) -> Option<f64> {
        self.points.binary_search(x).ok().map(|j| self.values[j])
    }

    /// Values at `xs`, or the list of points not covered.
    pub fn require(&self, xs: &[Site]) -> Result<Vec<f64>> {
        let missing: Vec<Vec<i64>> =
            xs.iter().filter(|x| self.get(x).is_none()).map(|x| x.coords().to_vec()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingPoints(missing));
        }
        Ok(xs.iter().map(|x| self.get(x).unwrap()).collect())
    }

    pub fn is_converged(&self) -> bool {
        self.status == JStatus::Converged
    }

    /// `max |J(x) - delta_{x,0} - sum_e p(e) J(x + e)|` over interior points.
    pub fn resolvent_residual(&self) -> f64 {
        resolvent_residual(&self.kernel, &self.points, &self.values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# format=rwre-jkernel-v1")?;
        writeln!(w, "# kernel={}", self.kernel)?;
        writeln!(w, "# radius={}", self.radius)?;
        writeln!(w, "# method={:?}", self.method)?;
        writeln!(w, "# tol={:e}", self.tol)?;
        writeln!(w, "# truncation_bound={:e}", self.truncation_bound)?;
        writeln!(w, "# status={:?}", self.status)?;
        write_table_rows(&mut w, &self.points, &self.values, "j")
    }
}

/// `J_p(x) = lim_n sum_{k <= n} (p_k(0, -x) - p_k(0, 0))` on the ball covering
/// `points`.
pub fn j_kernel(kernel: &TransitionKernel, points: &[Site], tol: f64) -> Result<JTable> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let dim = kernel.dim();
    let radius = table_radius(points, dim)?;
    let (_, speed) = drift_of(kernel);
    if speed > DRIFT_EPS && dim == 2 && kernel.min_prob() > 0.0 {
        let ball = l1_ball(dim, radius);
        let targets: Vec<Site> = ball.iter().map(|x| x.neg()).collect();
        if box_cost(kernel, &targets, tol / 2.0) > FOURIER_SWITCH_COST {
            return fourier_table(kernel, ball, radius, tol);
        }
    }
    if speed > DRIFT_EPS {
        let g = green(kernel, points, tol / 2.0)?;
        let g0 = g.get(&Site::origin(dim)).unwrap();
        let values =
            g.points.iter().zip(&g.values).map(|(x, v)| if x.l1_norm() == 0 { 0.0 } else { v - g0 }).collect();
        let bound = 2.0 * g.truncation_bound;
        return Ok(JTable {
            kernel: kernel.clone(),
            radius,
            points: g.points,
            values,
            truncation_bound: bound,
            tol,
            method: GreenMethod::AbsorbingBox,
            status: status_for(bound, tol),
            diagnostics: None,
            box_diagnostics: g.box_diagnostics,
        });
    }
    let ball = l1_ball(dim, radius);
    let mut targets = vec![Site::origin(dim)];
    targets.extend(ball.iter().map(|x| x.neg()));
    let mut requested: Vec<Site> = points.to_vec();
    requested.sort();
    requested.dedup();
    let abel_targets: Vec<Site> = requested.iter().map(|x| x.neg()).collect();
    let ps = driftless_partial_sums(kernel, &targets, &abel_targets)?;
    let base = effective_dim(kernel) as f64 / 2.0;
    let exponents: Vec<f64> = (0..4).map(|j| base + j as f64).collect();
    let n_max = *ps.checkpoints.last().unwrap();
    let leak_term = 2.0 * (n_max as f64 + 1.0) * ps.total_leaked;
    let mut err: f64 = 0.0;
    let mut tableaux = Vec::with_capacity(ball.len());
    let values: Vec<f64> = ball
        .iter()
        .enumerate()
        .map(|(j, x)| {
            if x.l1_norm() == 0 {
                tableaux.push(None);
                return 0.0;
            }
            let seq: Vec<f64> = ps.sums.iter().map(|row| row[j + 1] - row[0]).collect();
            let r = Richardson::new(&seq, 2.0, &exponents);
            err = err.max(2.0 * r.error_estimate());
            let v = r.estimate();
            tableaux.push(Some((seq, r)));
            v
        })
        .collect();
    let bound = err + leak_term + ROUNDING_FLOOR;
    let diag_points = requested
        .iter()
        .enumerate()
        .map(|(t, x)| {
            let j = ball.binary_search(x).unwrap();
            let (partial_sums, extrapolants) = match &tableaux[j] {
                Some((seq, r)) => (seq.clone(), r.diagonal()),
                None => (vec![0.0; ps.checkpoints.len()], vec![0.0]),
            };
            let means = ps.abel[t].clone();
            let m = means.len();
            let abel_estimate = (m >= 3).then(|| {
                let h = [1.0 - ps.abel_s[m - 3], 1.0 - ps.abel_s[m - 2], 1.0 - ps.abel_s[m - 1]];
                abel_extrapolate(h, [means[m - 3], means[m - 2], means[m - 1]])
            });
            JPointDiagnostics {
                point: *x,
                partial_sums,
                extrapolants,
                abel_s: ps.abel_s.clone(),
                abel_means: means,
                abel_estimate: abel_estimate.flatten(),
            }
        })
        .collect();
    Ok(JTable {
        kernel: kernel.clone(),
        radius,
        points: ball,
        values,
        truncation_bound: bound,
        tol,
        method: GreenMethod::Extrapolated,
        status: status_for(bound, tol),
        diagnostics: Some(JDiagnostics {
            checkpoints: ps.checkpoints,
            exponents,
            leaked_mass: ps.total_leaked,
            points: diag_points,
        }),
        box_diagnostics: None,
    })
}

fn fourier_table(kernel: &TransitionKernel, ball: Vec<Site>, radius: i64, tol: f64) -> Result<JTable> {
    let mut values = Vec::with_capacity(ball.len());
    let mut err: f64 = 0.0;
    for x in &ball {
        let (v, e) = crate::fourier::planar_j(kernel, x, tol)?;
        values.push(v);
        err = err.max(e);
    }
    let bound = err + ROUNDING_FLOOR;
    Ok(JTable {
        kernel: kernel.clone(),
        radius,
        points: ball,
        values,
        truncation_bound: bound,
        tol,
        method: GreenMethod::Fourier,
        status: status_for(bound, tol),
        diagnostics: None,
        box_diagnostics: None,
    })
}

fn status_for(bound: f64, tol: f64) -> JStatus {
    if bound <= tol {
        JStatus::Converged
    } else {
        JStatus::Flagged { reason: format!("extrapolation error {bound:e} exceeds tolerance {tol:e}") }
    }
}

/// Green function of the walk killed on leaving the cube `[-half_width,
/// half_width]^d`, by a direct sparse solve of `(I - P_box) G = delta`.
///
/// Independent of the time-stepping routes; used as an oracle for drifted
/// kernels, for which the truncation error decays exponentially in the box
/// size.
pub fn green_box_solve(kernel: &TransitionKernel, half_width: i64, points: &[Site]) -> Result<Vec<f64>> {
    let dim = kernel.dim();
    let lo = vec![-half_width; dim];
    let hi = vec![half_width; dim];
    let region = Region::new(&lo, &hi, |_| true)?;
    let live: Vec<usize> = (0..region.len).filter(|&i| region.inside[i]).collect();
    let mut number = vec![usize::MAX; region.len];
    for (k, &i) in live.iter().enumerate() {
        number[i] = k;
    }
    let offsets = region.offsets();
    // H(y) - sum_e p(e) H(y - e) = delta_{y,0}, with H(x, 0) = H(-x).
    let mut triplets = Vec::with_capacity(live.len() * (2 * dim + 1));
    for (k, &i) in live.iter().enumerate() {
        triplets.push((k, k, 1.0));
        for (dir, &p) in kernel.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let j = (i as isize - offsets[dir]) as usize;
            if region.inside[j] {
                triplets.push((k, number[j], -p));
            }
        }
    }
    let a = CsrMatrix::from_triplets(live.len(), live.len(), triplets);
    let mut b = vec![0.0; live.len()];
    b[number[region.index(&Site::origin(dim)).unwrap()]] = 1.0;
    let h = solve(&a, &b)?;
    points
        .iter()
        .map(|x| {
            region
                .index(&x.neg())
                .filter(|&i| region.inside[i])
                .map(|i| h[number[i]])
                .ok_or_else(|| Error::MissingPoints(vec![x.coords().to_vec()]))
        })
        .collect()
}
