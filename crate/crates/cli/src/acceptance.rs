//! The acceptance suite. Each criterion is a deterministic function of the
//! master seed; `verify-all` and the acceptance test target both call these.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwre::ballistic::{
    kalikow_infimum, kalikow_objective, poly_condition_test, poly_sweep, qld_constant, KalikowVerdict, PolyParams,
    PolyVerdict,
};
use rwre::env::annealed_kernel;
use rwre::estimators::{
    estimate_mu_delta, estimate_velocity, estimate_window_measure, torus_solve, MuDeltaEstimate, MuDeltaParams,
    RunParams, Sampling, VelocityEstimator,
};
use rwre::expansion::{velocity_coefficients, Orientation};
use rwre::green::{green, j_kernel};
use rwre::lattice::l1_ball;
use rwre::pattern::{PatternIndicator, Window};
use rwre::rng::{derive_seed, Stream};
use rwre::stats::loglog_fit;
use rwre::torus::torus_expansion_terms;
use rwre::{make_environment, Atom, Direction, EnvironmentField, PerturbationModel, Site, TransitionKernel};
use serde::Serialize;

use crate::commands::{run, Check, Subcommand};
use crate::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
}

impl CriterionResult {
    /// `criterion N [PASS|FAIL] name: summary`.
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.summary
        )
    }
}

fn result(id: u8, name: &'static str, passed: bool, summary: String, metrics: &[(&str, f64)]) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed,
        summary,
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

fn failed(id: u8, name: &'static str, err: impl std::fmt::Display) -> CriterionResult {
    result(id, name, false, format!("error: {err}"), &[])
}

fn standard_env(dim: usize, eps: f64, seed: u64, period: Option<u32>) -> rwre::Result<EnvironmentField> {
    make_environment(TransitionKernel::uniform(dim), eps, PerturbationModel::standard_drift(dim), seed, period)
}

fn two_site_window(model: &PerturbationModel) -> rwre::Result<Window> {
    Window::for_model(vec![Site::new(&[0, 0]), Site::new(&[1, 0])], model)
}

pub const TORUS_TV_LIMIT: f64 = 0.01;

/// Empirical window pmf of a long walk on an `L = 4` periodic environment
/// against the exact stationary pmf.
pub fn torus_equivalence(seed: u64) -> CriterionResult {
    const NAME: &str = "torus oracle equivalence";
    let run = || -> rwre::Result<CriterionResult> {
        let env = standard_env(2, 0.05, derive_seed(seed, Stream::Environment, 1), Some(4))?;
        let window = two_site_window(env.model())?;
        let oracle = torus_solve(&env, &window)?;
        let params = RunParams {
            n_walks: 10,
            n_steps: 1_001_000,
            burn_in: Some(1_000),
            seed: derive_seed(seed, Stream::Walk, 1),
            sampling: Sampling::Fixed,
        };
        let est = estimate_window_measure(&env, &window, &params)?;
        let tv = est.tv_distance(&oracle.q_window);
        Ok(result(
            1,
            NAME,
            tv < TORUS_TV_LIMIT && oracle.residual <= 1e-10,
            format!(
                "TV = {tv:.2e} < {TORUS_TV_LIMIT} over {} samples; stationarity residual {:.1e}",
                est.total_samples, oracle.residual
            ),
            &[("tv", tv), ("samples", est.total_samples as f64), ("residual", oracle.residual)],
        ))
    };
    run().unwrap_or_else(|e| failed(1, NAME, e))
}

pub const EXPANSION_EPSILONS: [f64; 3] = [0.02, 0.04, 0.08];

/// Residual slopes of the first- and second-order torus expansions.
pub fn expansion_scaling(seed: u64) -> CriterionResult {
    const NAME: &str = "expansion-order scaling";
    let run = || -> rwre::Result<CriterionResult> {
        let mut r1 = Vec::new();
        let mut r2 = Vec::new();
        for eps in EXPANSION_EPSILONS {
            let env = standard_env(2, eps, derive_seed(seed, Stream::Environment, 2), Some(8))?;
            let ex = torus_expansion_terms(&env, 2)?;
            r1.push(ex.residual(1));
            r2.push(ex.residual(2));
        }
        let bad = || rwre::Error::Precondition("residuals are not positive".into());
        let f1 = loglog_fit(&EXPANSION_EPSILONS, &r1).ok_or_else(bad)?;
        let f2 = loglog_fit(&EXPANSION_EPSILONS, &r2).ok_or_else(bad)?;
        Ok(result(
            2,
            NAME,
            f1.slope >= 1.7 && f2.slope >= 2.6,
            format!("first-order slope {:.3} (>= 1.7), second-order slope {:.3} (>= 2.6)", f1.slope, f2.slope),
            &[("slope_first", f1.slope), ("slope_second", f2.slope), ("residual_first_0.02", r1[0]), ("residual_second_0.02", r2[0])],
        ))
    };
    run().unwrap_or_else(|e| failed(2, NAME, e))
}

/// Monte Carlo velocity against `d0 + eps d1 + eps^2 d2` at `eps = 0.04, 0.08`.
pub fn velocity_expansion(seed: u64) -> CriterionResult {
    const NAME: &str = "velocity expansion";
    let run = || -> rwre::Result<CriterionResult> {
        let p0 = TransitionKernel::uniform(2);
        let model = PerturbationModel::standard_drift(2);
        let mut residual = Vec::new();
        let mut sigma = Vec::new();
        for (i, eps) in [0.04, 0.08].into_iter().enumerate() {
            let pe = annealed_kernel(&p0, eps, &model)?;
            let args: Vec<Site> = Direction::all(2).map(|e| Orientation::Reflected.argument(&Site::origin(2), e)).collect();
            let table = j_kernel(&pe.reversed(), &args, 1e-7)?;
            let coeffs = velocity_coefficients(&p0, &model, eps, &table, Orientation::Reflected)?;
            let env = standard_env(2, eps, 0, None)?;
            let params = RunParams {
                n_walks: 200,
                n_steps: 1_100_000,
                burn_in: Some(100_000),
                seed: derive_seed(seed, Stream::Model, 30 + i as u64),
                sampling: Sampling::Fresh,
            };
            let v = estimate_velocity(&env, &params, VelocityEstimator::DriftSum)?;
            residual.push(v.mean[0] - coeffs.approximation()[0]);
            sigma.push(v.stderr[0]);
        }
        let (small, large) = (residual[0].abs(), residual[1].abs());
        let combined = (sigma[0].powi(2) + (sigma[1] / 3.0).powi(2)).sqrt();
        let passed = small <= large / 3.0 + 2.0 * combined;
        Ok(result(
            3,
            NAME,
            passed,
            format!(
                "|r(0.04)| = {small:.2e} <= |r(0.08)|/3 + 2 sigma = {:.2e} (|r(0.08)| = {large:.2e}, sigma = {:.1e}/{:.1e})",
                large / 3.0 + 2.0 * combined,
                sigma[0],
                sigma[1]
            ),
            &[("residual_0.04", residual[0]), ("residual_0.08", residual[1]), ("stderr_0.04", sigma[0]), ("stderr_0.08", sigma[1])],
        ))
    };
    run().unwrap_or_else(|e| failed(3, NAME, e))
}

/// `0 < v . e1 <= E[d] . e1 + eps^2.4` in three dimensions.
pub fn velocity_inequality(seed: u64) -> CriterionResult {
    const NAME: &str = "three-dimensional velocity inequality";
    let run = || -> rwre::Result<CriterionResult> {
        let mut ok = true;
        let mut parts = Vec::new();
        let mut metrics = Vec::new();
        for (i, eps) in [0.05, 0.1].into_iter().enumerate() {
            let env = standard_env(3, eps, 0, None)?;
            let params = RunParams {
                n_walks: 100,
                n_steps: 220_000,
                burn_in: Some(20_000),
                seed: derive_seed(seed, Stream::Model, 40 + i as u64),
                sampling: Sampling::Fresh,
            };
            let v = estimate_velocity(&env, &params, VelocityEstimator::DriftSum)?;
            let (m, s) = (v.mean[0], v.stderr[0]);
            let bound = env.mean_drift()[0] + eps.powf(2.4);
            ok &= m + 2.0 * s > 0.0 && m - 2.0 * s <= bound;
            parts.push(format!("eps {eps}: v = {m:.5} +- {s:.1e} <= {bound:.5}"));
            metrics.push((if i == 0 { "v_0.05" } else { "v_0.1" }, m));
        }
        Ok(result(4, NAME, ok, parts.join("; "), &metrics))
    };
    run().unwrap_or_else(|e| failed(4, NAME, e))
}

/// Golden values of the two-dimensional potential kernel and residual bounds
/// of every table computed.
pub fn green_golden(_seed: u64) -> CriterionResult {
    const NAME: &str = "Green/J golden values";
    let run = || -> rwre::Result<CriterionResult> {
        let srw = j_kernel(&TransitionKernel::uniform(2), &l1_ball(2, 2), 1e-6)?;
        let j0 = srw.get(&Site::origin(2)).unwrap();
        let je = srw.get(&Site::new(&[1, 0])).unwrap();
        let jd = srw.get(&Site::new(&[1, 1])).unwrap();
        let drifted = TransitionKernel::new(vec![0.3, 0.2, 0.25, 0.25])?;
        let jdrift = j_kernel(&drifted.reversed(), &l1_ball(2, 2), 1e-8)?;
        let g3 = green(&TransitionKernel::uniform(3), &[Site::new(&[1, 0, 0])], 1e-4)?;
        let tables = [
            ("J srw2", srw.resolvent_residual(), srw.truncation_bound),
            ("J drifted", jdrift.resolvent_residual(), jdrift.truncation_bound),
            ("G srw3", g3.resolvent_residual(), g3.truncation_bound),
        ];
        let residuals_ok = tables.iter().all(|(_, r, b)| r <= b);
        let passed = j0 == 0.0 && (je + 1.0).abs() <= 1e-4 && (jd + 4.0 / PI).abs() <= 1e-4 && residuals_ok;
        let table_text: Vec<String> = tables.iter().map(|(n, r, b)| format!("{n} {r:.1e}<={b:.1e}")).collect();
        Ok(result(
            5,
            NAME,
            passed,
            format!(
                "J(0) = {j0}, J(e1)+1 = {:.1e}, J(1,1)+4/pi = {:.1e}; residual<=bound: {}",
                je + 1.0,
                jd + 4.0 / PI,
                table_text.join(", ")
            ),
            &[("j_e1_error", je + 1.0), ("j_11_error", jd + 4.0 / PI)],
        ))
    };
    run().unwrap_or_else(|e| failed(5, NAME, e))
}

/// A random finite-support model satisfying the QLD condition with
/// `C = 2 / min p0^2`, with `p0(e1) = p0(-e1)`.
pub fn random_qld_model(rng: &mut ChaCha8Rng) -> (TransitionKernel, PerturbationModel, f64) {
    loop {
        let dim = rng.random_range(2..=3usize);
        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = u.iter().sum();
        let probs: Vec<f64> = u.iter().flat_map(|x| [x / (2.0 * total); 2]).collect();
        let p0 = TransitionKernel::new(probs).expect("normalized");
        let n_atoms = rng.random_range(2..=4usize);
        let raw: Vec<f64> = (0..n_atoms).map(|_| rng.random_range(0.1..1.0)).collect();
        let wsum: f64 = raw.iter().sum();
        let atoms: Vec<Atom> = raw
            .iter()
            .map(|w| {
                let v: Vec<f64> = (0..2 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
                let scale = c.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                Atom::new(c.iter().map(|x| x / scale).collect(), w / wsum)
            })
            .collect();
        let Ok(model) = PerturbationModel::new(dim, atoms) else { continue };
        let lambda1 = model.mean_drift()[0];
        if lambda1 <= 0.05 {
            continue;
        }
        let m = p0.min_prob();
        // lambda = eps lambda1 > C eps^2  iff  eps < lambda1 m^2 / 2.
        let eps_max = (lambda1 * m * m / 2.0).min(m);
        let eps = eps_max * rng.random_range(0.05..0.99);
        debug_assert!(eps * lambda1 > qld_constant(&p0) * eps * eps);
        return (p0, model, eps);
    }
}

pub const KALIKOW_MODELS: usize = 50;

pub fn kalikow_positivity(seed: u64) -> CriterionResult {
    const NAME: &str = "Kalikow criterion under QLD";
    let run = || -> rwre::Result<CriterionResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Model, 6));
        let mut positive = 0;
        let mut min_inf = f64::INFINITY;
        let mut worst_homogeneity: f64 = 0.0;
        for _ in 0..KALIKOW_MODELS {
            let (p0, model, eps) = random_qld_model(&mut rng);
            let rep = kalikow_infimum(&model, &p0, eps)?;
            if rep.verdict == KalikowVerdict::Holds && rep.inf_value > 0.0 {
                positive += 1;
            }
            min_inf = min_inf.min(rep.inf_value);
            for _ in 0..20 {
                let g: Vec<f64> = (0..2 * p0.dim()).map(|_| rng.random_range(0.05..=1.0)).collect();
                let c: f64 = rng.random_range(0.05..=1.0);
                let cg: Vec<f64> = g.iter().map(|x| c * x).collect();
                let f = kalikow_objective(&model, &p0, eps, &g)?;
                let fc = kalikow_objective(&model, &p0, eps, &cg)?;
                worst_homogeneity = worst_homogeneity.max((fc * c - f).abs());
            }
        }
        Ok(result(
            6,
            NAME,
            positive == KALIKOW_MODELS && worst_homogeneity <= 1e-12,
            format!(
                "{positive}/{KALIKOW_MODELS} positive infima (smallest {min_inf:.3e}); max |c F(cg) - F(g)| = {worst_homogeneity:.1e}"
            ),
            &[("positive", positive as f64), ("min_inf", min_inf), ("homogeneity", worst_homogeneity)],
        ))
    };
    run().unwrap_or_else(|e| failed(6, NAME, e))
}

pub const MU_DELTAS: [f64; 3] = [0.9, 0.99, 0.999];

/// Each consecutive distance to the reference may exceed the previous one by
/// at most two combined standard errors.
pub fn mu_delta_monotone_check(rows: &[MuDeltaEstimate], reference: f64, reference_se: f64) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let sigma = (a.stderr.powi(2) + b.stderr.powi(2) + reference_se.powi(2)).sqrt();
        let (da, db) = ((a.estimate - reference).abs(), (b.estimate - reference).abs());
        ok &= db <= da + 2.0 * sigma;
        parts.push(format!("{}: {da:.2e} -> {}: {db:.2e} (2 sigma {:.1e})", a.delta, b.delta, 2.0 * sigma));
    }
    Check::new("mu-delta-monotone", ok, parts.join("; "))
}

pub fn mu_delta_convergence(seed: u64) -> CriterionResult {
    const NAME: &str = "mu_delta convergence";
    let run = || -> rwre::Result<CriterionResult> {
        let env = standard_env(2, 0.1, 0, None)?;
        let window = Window::for_model(vec![Site::new(&[1, 0])], env.model())?;
        let f = PatternIndicator::from_fn(&window, |a| a[0] == 1);
        let reference =
            estimate_window_measure(&env, &window, &RunParams::new(20, 2_000_000, derive_seed(seed, Stream::Model, 70)))?;
        let (w, w_se) = (reference.patterns[1].q_estimate, reference.patterns[1].q_stderr);
        let mut rows = Vec::new();
        for (i, delta) in MU_DELTAS.into_iter().enumerate() {
            let n = (40_000_000.0 * (1.0 - delta)).round() as u64;
            let params =
                MuDeltaParams { delta, n_replicas: n, seed: derive_seed(seed, Stream::Model, 71 + i as u64), sampling: Sampling::Fresh };
            rows.push(estimate_mu_delta(&env, &window, &f, &params)?);
        }
        let check = mu_delta_monotone_check(&rows, w, w_se);
        let metrics: Vec<(&str, f64)> =
            vec![("reference", w), ("mu_0.9", rows[0].estimate), ("mu_0.99", rows[1].estimate), ("mu_0.999", rows[2].estimate)];
        Ok(result(
            7,
            NAME,
            check.passed,
            format!("reference {w:.5} +- {w_se:.1e}; {} (empirical convergence only)", check.detail),
            &metrics,
        ))
    };
    run().unwrap_or_else(|e| failed(7, NAME, e))
}

pub const POLY_SIZES: [f64; 4] = [5.0, 8.0, 12.0, 18.0];

pub fn polynomial_condition(seed: u64) -> CriterionResult {
    const NAME: &str = "polynomial condition behavior";
    let run = || -> rwre::Result<CriterionResult> {
        let srw = make_environment(TransitionKernel::uniform(2), 0.0, PerturbationModel::zero(2), 0, None)?;
        let rep = poly_condition_test(&srw, &[1.0, 0.0], &PolyParams::new(10.0, 1.0, 20_000, derive_seed(seed, Stream::Model, 80)))?;
        let srw_ok = rep.ci_low > 0.1 && rep.verdict == PolyVerdict::Fails;
        let env = standard_env(2, 0.1, 0, None)?;
        let sweep = poly_sweep(&env, &[1.0, 0.0], &POLY_SIZES, 2.0, 20_000, derive_seed(seed, Stream::Model, 81), 1_000_000)?;
        let decreasing = sweep.rows.windows(2).all(|w| w[1].estimate <= w[0].ci_high);
        let exponent = sweep.decay_exponent.unwrap_or(f64::NAN);
        let estimates: Vec<String> = sweep.rows.iter().map(|r| format!("{:.2e}", r.estimate)).collect();
        Ok(result(
            8,
            NAME,
            srw_ok && decreasing && exponent > 0.0,
            format!(
                "SRW L=10: {:.4} [{:.4}, {:.4}] ({}); drifted L=5,8,12,18: {} with decay exponent {exponent:.3}",
                rep.estimate,
                rep.ci_low,
                rep.ci_high,
                rep.verdict.as_str(),
                estimates.join(", ")
            ),
            &[("srw_estimate", rep.estimate), ("decay_exponent", exponent)],
        ))
    };
    run().unwrap_or_else(|e| failed(8, NAME, e))
}

/// Small configuration exercising every artifact-producing subcommand.
pub fn determinism_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig { seed, ..ExperimentConfig::default() };
    c.velocity.n_walks = 8;
    c.velocity.n_steps = 5_000;
    c.invariant.n_walks = 4;
    c.invariant.n_steps = 20_000;
    c.mudelta.step_budget = 200_000;
    c.mudelta.reference_walks = 4;
    c.mudelta.reference_steps = 20_000;
    c.green.kernel = crate::config::KernelTarget::Named("annealed".into());
    c.green.tol = 1e-6;
    c.jkernel.radius = 2;
    c.expansion.period = 4;
    c.expansion.j_tol = 1e-5;
    c.polycond.n_runs = 200;
    c.polycond.sizes = vec![3.0, 5.0];
    c
}

/// Subcommands covered by the determinism criterion.
pub const DETERMINISM_COMMANDS: [Subcommand; 9] = [
    Subcommand::Velocity,
    Subcommand::Invariant,
    Subcommand::Mudelta,
    Subcommand::Green,
    Subcommand::Jkernel,
    Subcommand::Expansion,
    Subcommand::Kalikow,
    Subcommand::Polycond,
    Subcommand::TorusOracle,
];

pub fn determinism(seed: u64) -> CriterionResult {
    const NAME: &str = "determinism";
    let cfg = determinism_config(seed);
    let mut mismatched = Vec::new();
    for cmd in DETERMINISM_COMMANDS {
        let a = run(cmd, &cfg);
        let b = run(cmd, &cfg);
        match (a, b) {
            (Ok(a), Ok(b)) if a.json == b.json && a.csv == b.csv => {}
            (Ok(_), Ok(_)) => mismatched.push(cmd.name().to_string()),
            (Err(e), _) | (_, Err(e)) => return failed(9, NAME, format!("{}: {e}", cmd.name())),
        }
    }
    result(
        9,
        NAME,
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} subcommands produced byte-identical artifacts twice", DETERMINISM_COMMANDS.len())
        } else {
            format!("artifacts differ for {}", mismatched.join(", "))
        },
        &[("commands", DETERMINISM_COMMANDS.len() as f64), ("mismatched", mismatched.len() as f64)],
    )
}

pub type Criterion = fn(u64) -> CriterionResult;

pub const CRITERIA: [Criterion; 9] = [
    torus_equivalence,
    expansion_scaling,
    velocity_expansion,
    velocity_inequality,
    green_golden,
    kalikow_positivity,
    mu_delta_convergence,
    polynomial_condition,
    determinism,
];

pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|c| c(seed)).collect()
}
