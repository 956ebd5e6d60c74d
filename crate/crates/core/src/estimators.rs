//! Monte Carlo estimators over independent (environment, walk) replicas.
//!
//! Replica `r` uses environment seed `derive_seed(seed, Environment, r)` and
//! walk seed `derive_seed(seed, Walk, r)`. Replicas run in parallel but are
//! reduced in index order with compensated sums, so results do not depend on
//! the number of worker threads.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentField;
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::pattern::{PatternIndicator, Window};
use crate::rng::{derive_seed, Stream};
use crate::stats::{mean_stderr, ratio_stderr, CompensatedSum, Z95};
use crate::walk::{sample_killing_time, WalkState};

pub use crate::torus::{torus_solve, torus_solve_with_cap, TorusOracle};

/// Whether each replica draws a fresh environment or reuses the given one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Annealed: a new environment per replica.
    #[default]
    Fresh,
    /// Quenched: every replica walks in the supplied environment.
    Fixed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityEstimator {
    /// `(X_n - X_b) / (n - b)`.
    #[default]
    Displacement,
    /// `(1/(n-b)) sum_{k=b}^{n-1} d(X_k, omega)`. Same mean (the difference is a
    /// martingale), far smaller variance at weak disorder.
    DriftSum,
}

/// Replica layout shared by the estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub n_walks: u64,
    pub n_steps: u64,
    /// Defaults to `n_steps / 10`.
    pub burn_in: Option<u64>,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl RunParams {
    pub fn new(n_walks: u64, n_steps: u64, seed: u64) -> Self {
        Self { n_walks, n_steps, burn_in: None, seed, sampling: Sampling::Fresh }
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in.unwrap_or(self.n_steps / 10)
    }

    fn validate(&self) -> Result<()> {
        if self.n_walks == 0 {
            return Err(Error::Precondition("n_walks must be positive".into()));
        }
        if self.n_steps <= self.burn_in() {
            return Err(Error::Precondition(format!(
                "n_steps ({}) must exceed burn_in ({})",
                self.n_steps,
                self.burn_in()
            )));
        }
        Ok(())
    }
}

/// Environment and walk seeds of one replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaSeeds {
    pub environment: u64,
    pub walk: u64,
}

pub fn replica_seeds(env: &EnvironmentField, seed: u64, sampling: Sampling, r: u64) -> ReplicaSeeds {
    let environment = match sampling {
        Sampling::Fresh => derive_seed(seed, Stream::Environment, r),
        Sampling::Fixed => env.seed(),
    };
    ReplicaSeeds { environment, walk: derive_seed(seed, Stream::Walk, r) }
}

fn replica_env(env: &EnvironmentField, seeds: ReplicaSeeds) -> EnvironmentField {
    if seeds.environment == env.seed() {
        env.clone()
    } else {
        env.reseeded(seeds.environment)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub mean: Vec<f64>,
    /// Across replicas, one sample per (environment, walk).
    pub stderr: Vec<f64>,
    pub n_walks: u64,
    pub n_steps: u64,
    pub burn_in: u64,
    pub estimator: VelocityEstimator,
    pub sampling: Sampling,
    pub seed: u64,
    pub seeds: Vec<ReplicaSeeds>,
}

impl VelocityEstimate {
    /// `|mean - target|` per axis in units of the standard error.
    pub fn z_scores(&self, target: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stderr)
            .zip(target)
            .map(|((m, s), t)| {
                let diff = (m - t).abs();
                if diff == 0.0 {
                    0.0
                } else {
                    diff / *s
                }
            })
            .collect()
    }
}

fn velocity_replica(
    env: &EnvironmentField,
    params: &RunParams,
    estimator: VelocityEstimator,
    seeds: ReplicaSeeds,
) -> Vec<f64> {
    let env = replica_env(env, seeds);
    let dim = env.dim();
    let mut walker = WalkState::new(Site::origin(dim), seeds.walk);
    let burn_in = params.burn_in();
    for _ in 0..burn_in {
        walker.advance(&env);
    }
    let span = (params.n_steps - burn_in) as f64;
    match estimator {
        VelocityEstimator::Displacement => {
            let start = walker.position;
            for _ in burn_in..params.n_steps {
                walker.advance(&env);
            }
            (0..dim).map(|i| (walker.position.coord(i) - start.coord(i)) as f64 / span).collect()
        }
        VelocityEstimator::DriftSum => {
            let mut acc = vec![CompensatedSum::new(); dim];
            for _ in burn_in..params.n_steps {
                let atom = env.atom_index(&walker.position);
                let drift = env.atom_drift(atom);
                for (a, d) in acc.iter_mut().zip(drift) {
                    a.add(*d);
                }
                walker.advance(&env);
            }
            acc.iter().map(|a| a.value() / span).collect()
        }
    }
}

pub fn estimate_velocity(
    env: &EnvironmentField,
    params: &RunParams,
    estimator: VelocityEstimator,
) -> Result<VelocityEstimate> {
    params.validate()?;
    let seeds: Vec<ReplicaSeeds> =
        (0..params.n_walks).map(|r| replica_seeds(env, params.seed, params.sampling, r)).collect();
    let samples: Vec<Vec<f64>> =
        seeds.par_iter().map(|s| velocity_replica(env, params, estimator, *s)).collect();
    let dim = env.dim();
    let (mean, stderr) = (0..dim)
        .map(|i| {
            let column: Vec<f64> = samples.iter().map(|v| v[i]).collect();
            mean_stderr(&column)
        })
        .unzip();
    Ok(VelocityEstimate {
        mean,
        stderr,
        n_walks: params.n_walks,
        n_steps: params.n_steps,
        burn_in: params.burn_in(),
        estimator,
        sampling: params.sampling,
        seed: params.seed,
        seeds,
    })
}

/// Number of segments per replica when there is a single replica; the
/// standard errors then come from batch means.
pub const SINGLE_REPLICA_BATCHES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternEstimate {
    pub pattern: Vec<usize>,
    pub p_mass: f64,
    pub count: u64,
    pub q_estimate: f64,
    pub q_stderr: f64,
    pub ratio: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub zero_count: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitHalf {
    pub total_variation: f64,
    /// Largest `|q_first - q_second| / combined stderr` over patterns.
    pub max_z: f64,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMeasureEstimate {
    pub window: Vec<Site>,
    pub p_pmf: Vec<f64>,
    pub q_pmf: Vec<f64>,
    pub patterns: Vec<PatternEstimate>,
    pub total_samples: u64,
    pub n_walks: u64,
    pub n_steps: u64,
    pub burn_in: u64,
    /// `"replicas"` or `"batch-means"`.
    pub error_method: String,
    pub split_half: SplitHalf,
    pub sampling: Sampling,
    pub seed: u64,
    pub seeds: Vec<ReplicaSeeds>,
    pub warnings: Vec<String>,
}

impl WindowMeasureEstimate {
    /// Total-variation distance between the estimate and `pmf`.
    pub fn tv_distance(&self, pmf: &[f64]) -> f64 {
        0.5 * crate::stats::sum(self.q_pmf.iter().zip(pmf).map(|(a, b)| (a - b).abs()))
    }

    /// `pattern, p_mass, q_estimate, ratio, ci_low, ci_high, zero_count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "pattern,p_mass,q_estimate,q_stderr,ratio,ci_low,ci_high,zero_count")?;
        for p in &self.patterns {
            let tuple: Vec<String> = p.pattern.iter().map(|a| a.to_string()).collect();
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                tuple.join(" "),
                p.p_mass,
                p.q_estimate,
                p.q_stderr,
                p.ratio,
                p.ratio_low,
                p.ratio_high,
                p.zero_count
            )?;
        }
        Ok(())
    }
}

fn window_replica(
    env: &EnvironmentField,
    window: &Window,
    params: &RunParams,
    segments: usize,
    seeds: ReplicaSeeds,
) -> Vec<Vec<u64>> {
    let env = replica_env(env, seeds);
    let mut walker = WalkState::new(Site::origin(env.dim()), seeds.walk);
    let burn_in = params.burn_in();
    for _ in 0..burn_in {
        walker.advance(&env);
    }
    let n = params.n_steps - burn_in;
    let mut counts = vec![vec![0u64; window.n_patterns() as usize]; segments];
    for k in 0..n {
        let seg = (k as u128 * segments as u128 / n as u128) as usize;
        counts[seg][window.pattern_at(&env, &walker.position) as usize] += 1;
        walker.advance(&env);
    }
    counts
}

/// Time-averaged pattern frequencies of the environment seen from the walker,
/// sampled at steps `burn_in..n_steps` and pooled across replicas.
pub fn estimate_window_measure(
    env: &EnvironmentField,
    window: &Window,
    params: &RunParams,
) -> Result<WindowMeasureEstimate> {
    params.validate()?;
    if window.dim() != env.dim() {
        return Err(Error::DimensionMismatch { expected: env.dim(), got: window.dim() });
    }
    if window.n_atoms() != env.model().n_atoms() {
        return Err(Error::Precondition("window was built for a different model".into()));
    }
    let mut warnings = Vec::new();
    if env.mean_drift().iter().all(|d| *d == 0.0) && env.base().local_drift().iter().all(|d| *d == 0.0) {
        warnings.push("no drift condition holds; the walk may not be ballistic".into());
    }
    let segments = if params.n_walks >= 2 { 2 } else { SINGLE_REPLICA_BATCHES };
    let seeds: Vec<ReplicaSeeds> =
        (0..params.n_walks).map(|r| replica_seeds(env, params.seed, params.sampling, r)).collect();
    let per_replica: Vec<Vec<Vec<u64>>> =
        seeds.par_iter().map(|s| window_replica(env, window, params, segments, *s)).collect();

    let n_patterns = window.n_patterns() as usize;
    let p_pmf = window.product_pmf(env.model());
    // Error units: replica totals, or batches of the single replica.
    let units: Vec<Vec<u64>> = if params.n_walks >= 2 {
        per_replica.iter().map(|segs| sum_counts(segs.iter(), n_patterns)).collect()
    } else {
        per_replica[0].clone()
    };
    let half = segments / 2;
    let halves: Vec<Vec<Vec<u64>>> = per_replica
        .iter()
        .map(|segs| vec![sum_counts(segs[..half].iter(), n_patterns), sum_counts(segs[half..].iter(), n_patterns)])
        .collect();
    let totals = sum_counts(units.iter(), n_patterns);
    let total_samples: u64 = totals.iter().sum();

    let unit_stats = |units: &[&Vec<u64>], p: usize| -> (f64, f64) {
        let num: Vec<f64> = units.iter().map(|u| u[p] as f64).collect();
        let den: Vec<f64> = units.iter().map(|u| u.iter().sum::<u64>() as f64).collect();
        ratio_stderr(&num, &den)
    };
    let unit_refs: Vec<&Vec<u64>> = units.iter().collect();
    let mut q_pmf = Vec::with_capacity(n_patterns);
    let mut patterns = Vec::with_capacity(n_patterns);
    for p in 0..n_patterns {
        let count = totals[p];
        let q = count as f64 / total_samples as f64;
        let (_, se) = unit_stats(&unit_refs, p);
        let pm = p_pmf[p];
        let zero_count = count == 0 && pm > 0.0;
        let (ratio, lo, hi) = if pm == 0.0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else if zero_count {
            // Rule of three: one-sided 95% upper bound for an unseen event.
            (0.0, 0.0, (3.0 / total_samples as f64) / pm)
        } else {
            (q / pm, ((q - Z95 * se) / pm).max(0.0), (q + Z95 * se) / pm)
        };
        q_pmf.push(q);
        patterns.push(PatternEstimate {
            pattern: window.decode(p as u64),
            p_mass: pm,
            count,
            q_estimate: q,
            q_stderr: se,
            ratio,
            ratio_low: lo,
            ratio_high: hi,
            zero_count,
        });
    }

    let split_half = {
        let first: Vec<&Vec<u64>> = halves.iter().map(|h| &h[0]).collect();
        let second: Vec<&Vec<u64>> = halves.iter().map(|h| &h[1]).collect();
        let f_tot = sum_counts(first.iter().copied(), n_patterns);
        let s_tot = sum_counts(second.iter().copied(), n_patterns);
        let fn_ = f_tot.iter().sum::<u64>() as f64;
        let sn = s_tot.iter().sum::<u64>() as f64;
        // With one replica each half has half the batches; otherwise halves
        // are paired per replica.
        let (first_units, second_units): (Vec<&Vec<u64>>, Vec<&Vec<u64>>) = if params.n_walks >= 2 {
            (first, second)
        } else {
            let b = &per_replica[0];
            (b[..half].iter().collect(), b[half..].iter().collect())
        };
        let mut tv = CompensatedSum::new();
        let mut max_z: f64 = 0.0;
        for p in 0..n_patterns {
            let a = f_tot[p] as f64 / fn_;
            let b = s_tot[p] as f64 / sn;
            tv.add((a - b).abs());
            let (_, sa) = unit_stats(&first_units, p);
            let (_, sb) = unit_stats(&second_units, p);
            let s = (sa * sa + sb * sb).sqrt();
            let z = if a == b { 0.0 } else { (a - b).abs() / s };
            max_z = max_z.max(z);
        }
        // Bonferroni over patterns at the 99% family level.
        let crit = bonferroni_z(n_patterns);
        SplitHalf { total_variation: 0.5 * tv.value(), max_z, agrees: max_z <= crit }
    };
    if !split_half.agrees {
        warnings.push(format!(
            "split-half check failed (max z = {:.2}); burn-in may be too short",
            split_half.max_z
        ));
    }
    if patterns.iter().any(|p| p.zero_count) {
        warnings.push("some patterns were never observed; see zero_count".into());
    }

    Ok(WindowMeasureEstimate {
        window: window.sites().to_vec(),
        p_pmf,
        q_pmf,
        patterns,
        total_samples,
        n_walks: params.n_walks,
        n_steps: params.n_steps,
        burn_in: params.burn_in(),
        error_method: if params.n_walks >= 2 { "replicas" } else { "batch-means" }.into(),
        split_half,
        sampling: params.sampling,
        seed: params.seed,
        seeds,
        warnings,
    })
}

fn sum_counts<'a>(it: impl Iterator<Item = &'a Vec<u64>>, n: usize) -> Vec<u64> {
    let mut out = vec![0u64; n];
    for v in it {
        for (o, c) in out.iter_mut().zip(v) {
            *o += c;
        }
    }
    out
}

/// Two-sided normal quantile at family level 0.01 split over `m` tests.
fn bonferroni_z(m: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let alpha = 0.01 / m.max(1) as f64;
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuDeltaParams {
    pub delta: f64,
    pub n_replicas: u64,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuDeltaEstimate {
    pub delta: f64,
    pub n_replicas: u64,
    /// `sum_r sum_{n <= tau_r} f(t_{X_n} omega)`.
    pub numerator: u64,
    /// `sum_r (tau_r + 1)`.
    pub denominator: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub denominator_mean: f64,
    /// `1 / (1 - delta)`.
    pub denominator_expected: f64,
    /// Same replicas with `1 - f`; `estimate + complement_estimate = 1`.
    pub complement_estimate: f64,
    pub seed: u64,
    pub sampling: Sampling,
    /// The representation of the invariant measure as a limit of these
    /// estimates is only observed, not certified.
    pub label: String,
}

/// Path-sum estimate of `int f d mu_delta`: the walk is run to an independent
/// geometric time `tau` with `P(tau = k) = delta^k (1 - delta)` and `f` is
/// accumulated along the killed path.
pub fn estimate_mu_delta(
    env: &EnvironmentField,
    window: &Window,
    f: &PatternIndicator,
    params: &MuDeltaParams,
) -> Result<MuDeltaEstimate> {
    let delta = params.delta;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("delta must lie in (0,1), got {delta}")));
    }
    if params.n_replicas < 2 {
        return Err(Error::Precondition("n_replicas must be at least 2".into()));
    }
    if window.dim() != env.dim() {
        return Err(Error::DimensionMismatch { expected: env.dim(), got: window.dim() });
    }
    let per: Vec<(u64, u64)> = (0..params.n_replicas)
        .into_par_iter()
        .map(|r| {
            let seeds = replica_seeds(env, params.seed, params.sampling, r);
            let env = replica_env(env, seeds);
            let mut walker = WalkState::new(Site::origin(env.dim()), seeds.walk);
            let tau = sample_killing_time(walker.rng_mut(), delta);
            let mut hits = u64::from(f.contains(window.pattern_at(&env, &walker.position)));
            for _ in 0..tau {
                walker.advance(&env);
                hits += u64::from(f.contains(window.pattern_at(&env, &walker.position)));
            }
            (hits, tau + 1)
        })
        .collect();
    let numerator: u64 = per.iter().map(|p| p.0).sum();
    let denominator: u64 = per.iter().map(|p| p.1).sum();
    let num: Vec<f64> = per.iter().map(|p| p.0 as f64).collect();
    let den: Vec<f64> = per.iter().map(|p| p.1 as f64).collect();
    let (_, stderr) = ratio_stderr(&num, &den);
    let estimate = numerator as f64 / denominator as f64;
    Ok(MuDeltaEstimate {
        delta,
        n_replicas: params.n_replicas,
        numerator,
        denominator,
        estimate,
        stderr,
        denominator_mean: denominator as f64 / params.n_replicas as f64,
        denominator_expected: 1.0 / (1.0 - delta),
        complement_estimate: (denominator - numerator) as f64 / denominator as f64,
        seed: params.seed,
        sampling: params.sampling,
        label: "empirical convergence only".into(),
    })
}
