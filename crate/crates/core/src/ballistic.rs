//! Ballisticity certificates: Kalikow's criterion and the polynomial
//! condition on slab boxes.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{annealed_kernel, EnvironmentField};
use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::Site;
use crate::model::PerturbationModel;
use crate::rng::{derive_seed, Stream};
use crate::stats::{loglog_fit, wilson_interval, LogLogFit, Z95};
use crate::walk::{run_until_exit, ExitSide, SlabBox, WalkState, DEFAULT_MAX_STEPS};

/// Atoms of `omega(0, .)` as `(weight, probabilities, d . e1)`.
struct KalikowProblem {
    atoms: Vec<(f64, Vec<f64>, f64)>,
    n_dirs: usize,
}

impl KalikowProblem {
    fn new(model: &PerturbationModel, p0: &TransitionKernel, epsilon: f64) -> Result<Self> {
        if model.dim() != p0.dim() {
            return Err(Error::DimensionMismatch { expected: p0.dim(), got: model.dim() });
        }
        let min_prob = p0.min_prob();
        if !(epsilon >= 0.0) || (epsilon > 0.0 && epsilon >= min_prob) {
            return Err(Error::EllipticityViolated { epsilon, min_prob, kappa: min_prob - epsilon });
        }
        let atoms = model
            .atoms()
            .iter()
            .map(|a| {
                let probs: Vec<f64> = p0.probs().iter().zip(&a.zeta).map(|(p, z)| p + epsilon * z).collect();
                (a.weight, probs.clone(), probs[0] - probs[1])
            })
            .collect();
        Ok(Self { atoms, n_dirs: 2 * p0.dim() })
    }

    fn eval(&self, g: &[f64]) -> f64 {
        crate::stats::sum(self.atoms.iter().map(|(w, probs, lambda)| {
            let den: f64 = probs.iter().zip(g).map(|(p, x)| p * x).sum();
            w * lambda / den
        }))
    }
}

/// `F(g) = E[ d(0, omega) . e1 / sum_e omega(0, e) g(e) ]`, evaluated exactly
/// over the atoms of the model.
pub fn kalikow_objective(
    model: &PerturbationModel,
    p0: &TransitionKernel,
    epsilon: f64,
    g: &[f64],
) -> Result<f64> {
    let problem = KalikowProblem::new(model, p0, epsilon)?;
    if g.len() != problem.n_dirs {
        return Err(Error::DimensionMismatch { expected: problem.n_dirs, got: g.len() });
    }
    if g.iter().any(|x| !(*x >= 0.0 && *x <= 1.0)) || g.iter().all(|x| *x == 0.0) {
        return Err(Error::Precondition("g must lie in [0,1]^(2d) and be nonzero".into()));
    }
    Ok(problem.eval(g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KalikowVerdict {
    Holds,
    /// Some `g` gives `F(g) < 0`, so the infimum is `-inf` by scaling.
    Fails,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalikowDiagnostics {
    pub multistarts: usize,
    pub gradient_iterations: usize,
    pub grid_points_per_axis: usize,
    pub polish_rounds: usize,
    pub evaluations: usize,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalikowReport {
    /// Minimum over the faces `g(e*) = 1`; `-inf` when the criterion fails.
    pub inf_value: f64,
    pub argmin: Vec<f64>,
    /// Index of the direction `e*` with `g(e*) = 1`.
    pub face: usize,
    /// `E[d(0, omega) . e1]`.
    pub lambda: f64,
    pub verdict: KalikowVerdict,
    /// A `g` with `F(g) < 0`, when one was found.
    pub witness: Option<Vec<f64>>,
    pub witness_value: Option<f64>,
    pub diagnostics: KalikowDiagnostics,
}

pub const KALIKOW_STARTS: usize = 5;
pub const KALIKOW_GRID: usize = 9;
pub const KALIKOW_TOL: f64 = 1e-8;
const MAX_GRADIENT_ITERATIONS: usize = 500;

struct Search<'a> {
    problem: &'a KalikowProblem,
    evaluations: usize,
    witness: Option<(Vec<f64>, f64)>,
}

impl Search<'_> {
    fn eval(&mut self, g: &[f64]) -> f64 {
        self.evaluations += 1;
        let f = self.problem.eval(g);
        if f < 0.0 && self.witness.is_none() {
            self.witness = Some((g.to_vec(), f));
        }
        f
    }

    fn gradient(&mut self, g: &[f64], face: usize) -> Vec<f64> {
        let h = 1e-6;
        let mut grad = vec![0.0; g.len()];
        let mut probe = g.to_vec();
        for i in (0..g.len()).filter(|&i| i != face) {
            let hi = (g[i] + h).min(1.0);
            let lo = (g[i] - h).max(0.0);
            probe[i] = hi;
            let fh = self.eval(&probe);
            probe[i] = lo;
            let fl = self.eval(&probe);
            probe[i] = g[i];
            grad[i] = (fh - fl) / (hi - lo);
        }
        grad
    }

    /// Projected gradient descent with backtracking. Returns the final point,
    /// its value and the iteration count.
    fn descend(&mut self, mut g: Vec<f64>, face: usize) -> (Vec<f64>, f64, usize) {
        let mut f = self.eval(&g);
        let mut iterations = 0;
        while iterations < MAX_GRADIENT_ITERATIONS && self.witness.is_none() {
            iterations += 1;
            let grad = self.gradient(&g, face);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let cand: Vec<f64> = g
                    .iter()
                    .zip(&grad)
                    .enumerate()
                    .map(|(i, (x, d))| if i == face { 1.0 } else { (x - t * d).clamp(0.0, 1.0) })
                    .collect();
                let fc = self.eval(&cand);
                if fc < f {
                    let shift = cand.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    g = cand;
                    f = fc;
                    moved = shift >= KALIKOW_TOL;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (g, f, iterations)
    }

    /// Coordinate-wise 9-point grid refinement, halving the span when a full
    /// sweep brings no improvement.
    fn polish(&mut self, mut g: Vec<f64>, mut f: f64, face: usize) -> (Vec<f64>, f64, usize) {
        let mut span = 0.25;
        let mut rounds = 0;
        let half = (KALIKOW_GRID / 2) as f64;
        while span >= KALIKOW_TOL && self.witness.is_none() {
            rounds += 1;
            let mut improved = false;
            for i in (0..g.len()).filter(|&i| i != face) {
                let centre = g[i];
                for k in 0..KALIKOW_GRID {
                    let x = (centre + span * (k as f64 - half) / half).clamp(0.0, 1.0);
                    if x == g[i] {
                        continue;
                    }
                    let old = g[i];
                    g[i] = x;
                    let fx = self.eval(&g);
                    if fx < f {
                        f = fx;
                        improved = true;
                    } else {
                        g[i] = old;
                    }
                }
            }
            if !improved {
                span *= 0.5;
            }
        }
        (g, f, rounds)
    }
}

/// Minimizes the Kalikow objective over every face `{g(e*) = 1}` of
/// `[0,1]^(2d)`. By homogeneity of degree `-1` the sign of the face minimum
/// is the sign of the infimum over all nonzero `g`.
pub fn kalikow_infimum(model: &PerturbationModel, p0: &TransitionKernel, epsilon: f64) -> Result<KalikowReport> {
    let problem = KalikowProblem::new(model, p0, epsilon)?;
    let lambda = annealed_kernel(p0, epsilon, model)?.local_drift()[0];
    let n = problem.n_dirs;
    let mut search = Search { problem: &problem, evaluations: 0, witness: None };
    let mut rng = ChaCha8Rng::seed_from_u64(0x4B41_4C49);
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    let mut gradient_iterations = 0;
    let mut polish_rounds = 0;
    'faces: for face in 0..n {
        for start in 0..KALIKOW_STARTS {
            let g0: Vec<f64> = (0..n)
                .map(|i| if i == face || start == 0 { 1.0 } else { rng.random::<f64>() })
                .collect();
            let (g, f, it) = search.descend(g0, face);
            gradient_iterations += it;
            if search.witness.is_some() {
                break 'faces;
            }
            if best.as_ref().is_none_or(|b| f < b.1) {
                best = Some((g, f, face));
            }
        }
        if let Some((g, f, bf)) = best.clone().filter(|b| b.2 == face) {
            let (g, f2, rounds) = search.polish(g, f, face);
            polish_rounds += rounds;
            best = Some((g, f2, bf));
            if search.witness.is_some() {
                break 'faces;
            }
        }
    }
    let diagnostics = KalikowDiagnostics {
        multistarts: KALIKOW_STARTS,
        gradient_iterations,
        grid_points_per_axis: KALIKOW_GRID,
        polish_rounds,
        evaluations: search.evaluations,
        tolerance: KALIKOW_TOL,
    };
    if let Some((w, fw)) = search.witness {
        return Ok(KalikowReport {
            inf_value: f64::NEG_INFINITY,
            argmin: w.clone(),
            face: w.iter().position(|x| *x == 1.0).unwrap_or(0),
            lambda,
            verdict: KalikowVerdict::Fails,
            witness: Some(w),
            witness_value: Some(fw),
            diagnostics,
        });
    }
    let (argmin, inf_value, face) = best.expect("at least one face");
    let verdict = if inf_value > 0.0 { KalikowVerdict::Holds } else { KalikowVerdict::Fails };
    Ok(KalikowReport {
        inf_value,
        argmin,
        face,
        lambda,
        verdict,
        witness: None,
        witness_value: None,
        diagnostics,
    })
}

/// QLD constant `C = 2 / min_e p0(e)^2` under which Kalikow's criterion is
/// guaranteed.
pub fn qld_constant(p0: &TransitionKernel) -> f64 {
    2.0 / p0.min_prob().powi(2)
}

/// `(1/(2d)) (lambda - 2 eps^2 / min_e p0(e)^2)`, a lower bound on the
/// Kalikow infimum.
pub fn lemma1_bound(model: &PerturbationModel, p0: &TransitionKernel, epsilon: f64) -> Result<f64> {
    let lambda = annealed_kernel(p0, epsilon, model)?.local_drift()[0];
    let d = p0.dim() as f64;
    Ok((lambda - epsilon * epsilon * qld_constant(p0)) / (2.0 * d))
}

/// `(2/3) 2^(3(d-1)) min exp{2 (ln 90 + sum_j ln j / 2^j)}`.
pub fn c0(dim: usize) -> f64 {
    let series: f64 = crate::stats::sum((2..200).map(|j| (j as f64).ln() / 2f64.powi(j)));
    let a = 2.0 / 3.0 * 2f64.powi(3 * (dim as i32 - 1));
    let b = (2.0 * (90f64.ln() + series)).exp();
    a.min(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolyVerdict {
    HoldsEmpirically,
    Fails,
    Inconclusive,
}

impl PolyVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            PolyVerdict::HoldsEmpirically => "holds-empirically",
            PolyVerdict::Fails => "fails",
            PolyVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyParams {
    pub l: f64,
    pub m: f64,
    pub n_runs: u64,
    pub seed: u64,
    pub max_steps: u64,
}

impl PolyParams {
    pub fn new(l: f64, m: f64, n_runs: u64, seed: u64) -> Self {
        Self { l, m, n_runs, seed, max_steps: DEFAULT_MAX_STEPS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyConditionReport {
    pub m: f64,
    pub l: f64,
    pub direction: Vec<f64>,
    pub n_runs: u64,
    pub front: u64,
    pub back: u64,
    pub lateral: u64,
    pub censored: u64,
    /// `(back + lateral) / (n_runs - censored)`.
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `L^-M`.
    pub threshold: f64,
    pub c0: f64,
    pub l_at_least_c0: bool,
    pub verdict: PolyVerdict,
    pub seed: u64,
    pub max_steps: u64,
}

/// Largest censored fraction for which a verdict other than inconclusive is
/// given.
pub const MAX_CENSORED_FRACTION: f64 = 0.01;

/// Monte Carlo estimate of `P_0(X_T . l < L)` for the exit time `T` of the
/// slab box, with a fresh environment for every run.
pub fn poly_condition_test(env: &EnvironmentField, direction: &[f64], params: &PolyParams) -> Result<PolyConditionReport> {
    if !(params.l >= 2.0) {
        return Err(Error::Precondition(format!("L must be at least 2, got {}", params.l)));
    }
    if !(params.m > 0.0) {
        return Err(Error::Precondition(format!("M must be positive, got {}", params.m)));
    }
    if params.n_runs < 100 {
        return Err(Error::Precondition(format!("n_runs must be at least 100, got {}", params.n_runs)));
    }
    if direction.len() != env.dim() {
        return Err(Error::DimensionMismatch { expected: env.dim(), got: direction.len() });
    }
    let slab = SlabBox::new(direction, params.l)?;
    let sides: Vec<ExitSide> = (0..params.n_runs)
        .into_par_iter()
        .map(|r| {
            let env = env.reseeded(derive_seed(params.seed, Stream::Environment, r));
            let mut walker = WalkState::new(Site::origin(env.dim()), derive_seed(params.seed, Stream::Walk, r));
            run_until_exit(&env, &slab, &mut walker, params.max_steps).map(|e| e.side)
        })
        .collect::<Result<_>>()?;
    let count = |s: ExitSide| sides.iter().filter(|x| **x == s).count() as u64;
    let (front, back, lateral, censored) =
        (count(ExitSide::Front), count(ExitSide::Back), count(ExitSide::Lateral), count(ExitSide::Censored));
    let decided = params.n_runs - censored;
    let failures = back + lateral;
    let estimate = if decided == 0 { f64::NAN } else { failures as f64 / decided as f64 };
    let (ci_low, ci_high) = wilson_interval(failures, decided, Z95);
    let threshold = params.l.powf(-params.m);
    let c0 = c0(env.dim());
    let verdict = if censored as f64 > MAX_CENSORED_FRACTION * params.n_runs as f64 {
        PolyVerdict::Inconclusive
    } else if ci_high < threshold {
        PolyVerdict::HoldsEmpirically
    } else if ci_low > threshold {
        PolyVerdict::Fails
    } else {
        PolyVerdict::Inconclusive
    };
    Ok(PolyConditionReport {
        m: params.m,
        l: params.l,
        direction: slab.direction().to_vec(),
        n_runs: params.n_runs,
        front,
        back,
        lateral,
        censored,
        estimate,
        ci_low,
        ci_high,
        threshold,
        c0,
        l_at_least_c0: params.l >= c0,
        verdict,
        seed: params.seed,
        max_steps: params.max_steps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySweep {
    pub rows: Vec<PolyConditionReport>,
    /// Log-log fit of the failure estimate against `L`, over rows with a
    /// positive estimate.
    pub fit: Option<LogLogFit>,
    /// `-slope` of the fit: positive when failures decay in `L`.
    pub decay_exponent: Option<f64>,
}

impl PolySweep {
    /// `L, M, estimate, ci_low, ci_high, threshold, verdict`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "L,M,estimate,ci_low,ci_high,threshold,verdict")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e},{}",
                r.l,
                r.m,
                r.estimate,
                r.ci_low,
                r.ci_high,
                r.threshold,
                r.verdict.as_str()
            )?;
        }
        Ok(())
    }
}

/// Runs [`poly_condition_test`] for each box size. Box `i` uses seed
/// `derive_seed(seed, Model, i)`.
pub fn poly_sweep(
    env: &EnvironmentField,
    direction: &[f64],
    sizes: &[f64],
    m: f64,
    n_runs: u64,
    seed: u64,
    max_steps: u64,
) -> Result<PolySweep> {
    let rows = sizes
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let params = PolyParams { l, m, n_runs, seed: derive_seed(seed, Stream::Model, i as u64), max_steps };
            poly_condition_test(env, direction, &params)
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.estimate > 0.0).map(|r| (r.l, r.estimate)).unzip();
    let fit = loglog_fit(&xs, &ys);
    Ok(PolySweep { rows, decay_exponent: fit.map(|f| -f.slope), fit })
}
