//! Subcommands. Each returns an [`Output`] whose bytes depend only on the
//! configuration and the code version.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwre::ballistic::{kalikow_infimum, kalikow_objective, lemma1_bound, poly_sweep, qld_constant};
use rwre::estimators::{
    estimate_mu_delta, estimate_velocity, estimate_window_measure, torus_solve, MuDeltaParams, RunParams, Sampling,
};
use rwre::expansion::{
    explicit_2d_density, first_order_density, orientation_check, substituted_2d_density, velocity_coefficients,
    ExpansionKernel, Orientation,
};
use rwre::green::{green, j_kernel};
use rwre::lattice::l1_ball;
use rwre::pattern::{PatternIndicator, Window};
use rwre::rng::{derive_seed, Stream};
use rwre::stats::{loglog_fit, LogLogFit};
use rwre::torus::{torus_expansion_terms, DEFAULT_STATE_CAP};
use rwre::{Direction, Site};
use serde::Serialize;
use serde_json::{json, Value};

use crate::acceptance;
use crate::config::{sites, ConfigError, ExperimentConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Velocity,
    Invariant,
    Mudelta,
    Green,
    Jkernel,
    Expansion,
    Kalikow,
    Polycond,
    TorusOracle,
    VerifyAll,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Velocity => "velocity",
            Subcommand::Invariant => "invariant",
            Subcommand::Mudelta => "mudelta",
            Subcommand::Green => "green",
            Subcommand::Jkernel => "jkernel",
            Subcommand::Expansion => "expansion",
            Subcommand::Kalikow => "kalikow",
            Subcommand::Polycond => "polycond",
            Subcommand::TorusOracle => "torus-oracle",
            Subcommand::VerifyAll => "verify-all",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] rwre::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Artifact bytes of one subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub name: &'static str,
    pub json: String,
    /// `(file name, contents)`.
    pub csv: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Output {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.json", self.name)), &self.json)?;
        for (file, text) in &self.csv {
            std::fs::write(dir.join(file), text)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    subcommand: &'a str,
    code_version: &'a str,
    config_hash: String,
    seed: u64,
    config: &'a ExperimentConfig,
    checks: &'a [Check],
    all_passed: bool,
    result: Value,
}

fn finish(name: &'static str, cfg: &ExperimentConfig, checks: Vec<Check>, result: Value, csv: Vec<(String, String)>) -> Output {
    let env = Envelope {
        subcommand: name,
        code_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg,
        checks: &checks,
        all_passed: checks.iter().all(|c| c.passed),
        result,
    };
    let mut json = serde_json::to_string_pretty(&env).expect("artifact serializes");
    json.push('\n');
    Output { name, json, csv, checks }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn run(cmd: Subcommand, cfg: &ExperimentConfig) -> Result<Output, RunError> {
    cfg.validate()?;
    match cmd {
        Subcommand::Velocity => velocity(cfg),
        Subcommand::Invariant => invariant(cfg),
        Subcommand::Mudelta => mudelta(cfg),
        Subcommand::Green => green_cmd(cfg),
        Subcommand::Jkernel => jkernel(cfg),
        Subcommand::Expansion => expansion(cfg),
        Subcommand::Kalikow => kalikow(cfg),
        Subcommand::Polycond => polycond(cfg),
        Subcommand::TorusOracle => torus_oracle(cfg),
        Subcommand::VerifyAll => verify_all(cfg),
    }
}

fn velocity(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let env = cfg.environment.build(cfg.seed)?;
    let v = &cfg.velocity;
    let params =
        RunParams { n_walks: v.n_walks, n_steps: v.n_steps, burn_in: v.burn_in, seed: cfg.seed, sampling: v.sampling };
    let est = estimate_velocity(&env, &params, v.estimator)?;
    let finite = est.mean.iter().chain(&est.stderr).all(|x| x.is_finite());
    let checks = vec![Check::new("finite", finite, "mean and standard error are finite")];
    let result = json!({
        "estimate": est,
        "annealed_mean_drift": env.mean_drift(),
    });
    Ok(finish("velocity", cfg, checks, result, vec![]))
}

fn invariant(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let env = cfg.environment.build(cfg.seed)?;
    let c = &cfg.invariant;
    let window = Window::for_model(sites("invariant.window", &c.window, env.dim())?, env.model())?;
    let params =
        RunParams { n_walks: c.n_walks, n_steps: c.n_steps, burn_in: c.burn_in, seed: cfg.seed, sampling: c.sampling };
    let est = estimate_window_measure(&env, &window, &params)?;
    // First-order prediction; unavailable when the J table cannot be built.
    let prediction = first_order_prediction(cfg, &window, c.j_tol);
    let pmf_sum: f64 = est.q_pmf.iter().sum();
    let checks = vec![
        Check::new("pmf-sums-to-one", (pmf_sum - 1.0).abs() < 1e-12, format!("sum = {pmf_sum}")),
        Check::new("split-half", est.split_half.agrees, format!("max z = {:.3}", est.split_half.max_z)),
    ];
    let csv = csv_string(|b| est.write_csv(b));
    let result = json!({
        "estimate": est,
        "first_order_density": match &prediction {
            Ok(t) => to_value(t),
            Err(e) => Value::String(format!("unavailable: {e}")),
        },
    });
    Ok(finish("invariant", cfg, checks, result, vec![("invariant.csv".into(), csv)]))
}

fn first_order_prediction(cfg: &ExperimentConfig, window: &Window, tol: f64) -> Result<Vec<f64>, RunError> {
    let p0 = cfg.environment.base_kernel()?;
    let model = cfg.environment.model()?;
    let eps = cfg.environment.epsilon;
    let kernel = cfg.environment.annealed()?.reversed();
    let mut points = Vec::new();
    for z in window.sites() {
        for x in window.sites() {
            for e in Direction::all(window.dim()) {
                points.push(Orientation::Reflected.argument(&z.add(&x.neg()), e));
            }
        }
    }
    let table = j_kernel(&kernel, &points, tol)?;
    let d = first_order_density(&p0, eps, &model, window, &table, Orientation::Reflected, ExpansionKernel::Annealed)?;
    Ok(d.table(window))
}

fn mudelta(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let env = cfg.environment.build(cfg.seed)?;
    let c = &cfg.mudelta;
    let site = Site::new(&c.indicator.site);
    let window = Window::for_model(vec![site], env.model())?;
    if c.indicator.atom >= env.model().n_atoms() {
        return Err(ConfigError::Field {
            field: "mudelta.indicator.atom".into(),
            message: format!("model has {} atoms", env.model().n_atoms()),
        }
        .into());
    }
    let f = PatternIndicator::from_fn(&window, |a| a[0] == c.indicator.atom);
    let reference = estimate_window_measure(
        &env,
        &window,
        &RunParams::new(c.reference_walks, c.reference_steps, derive_seed(cfg.seed, Stream::Model, 7)),
    )?;
    let w = &reference.patterns[c.indicator.atom];
    let (w_mean, w_se) = (w.q_estimate, w.q_stderr);
    let mut rows = Vec::new();
    for (i, &delta) in c.deltas.iter().enumerate() {
        let n = ((c.step_budget as f64) * (1.0 - delta)).round().max(2.0) as u64;
        let params = MuDeltaParams { delta, n_replicas: n, seed: derive_seed(cfg.seed, Stream::Model, 100 + i as u64), sampling: Sampling::Fresh };
        rows.push(estimate_mu_delta(&env, &window, &f, &params)?);
    }
    let checks = vec![acceptance::mu_delta_monotone_check(&rows, w_mean, w_se)];
    let mut csv = String::from("delta,estimate,stderr,abs_diff_to_reference,n_replicas\n");
    for r in &rows {
        csv.push_str(&format!("{},{:e},{:e},{:e},{}\n", r.delta, r.estimate, r.stderr, (r.estimate - w_mean).abs(), r.n_replicas));
    }
    let result = json!({
        "reference": { "estimate": w_mean, "stderr": w_se, "p_mass": w.p_mass },
        "rows": rows,
        "label": "empirical convergence only",
    });
    Ok(finish("mudelta", cfg, checks, result, vec![("mudelta.csv".into(), csv)]))
}

fn green_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let kernel = cfg.green.kernel.resolve("green.kernel", &cfg.environment)?;
    let points = sites("green.points", &cfg.green.points, kernel.dim())?;
    let table = green(&kernel, &points, cfg.green.tol)?;
    let residual = table.resolvent_residual();
    let checks = vec![Check::new(
        "resolvent-residual",
        residual <= table.truncation_bound,
        format!("residual {residual:e} vs bound {:e}", table.truncation_bound),
    )];
    let csv = csv_string(|b| table.write_csv(b));
    Ok(finish("green", cfg, checks, to_value(&table), vec![("green.csv".into(), csv)]))
}

fn jkernel(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let kernel = cfg.jkernel.kernel.resolve("jkernel.kernel", &cfg.environment)?;
    if cfg.jkernel.radius < 1 {
        return Err(ConfigError::Field { field: "jkernel.radius".into(), message: "must be at least 1".into() }.into());
    }
    let points = l1_ball(kernel.dim(), cfg.jkernel.radius);
    let table = j_kernel(&kernel, &points, cfg.jkernel.tol)?;
    let residual = table.resolvent_residual();
    let checks = vec![
        Check::new(
            "resolvent-residual",
            residual <= table.truncation_bound,
            format!("residual {residual:e} vs bound {:e}", table.truncation_bound),
        ),
        Check::new("converged", table.is_converged(), format!("{:?}", table.status)),
    ];
    let csv = csv_string(|b| table.write_csv(b));
    Ok(finish("jkernel", cfg, checks, to_value(&table), vec![("jkernel.csv".into(), csv)]))
}

fn describe_fit(fit: Option<LogLogFit>, min_slope: f64) -> String {
    match fit {
        Some(f) => format!("slope {:.3} +- {:.1e} (need >= {min_slope})", f.slope, f.slope_stderr),
        None => "no fit (nonpositive residuals)".into(),
    }
}

fn expansion(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let c = &cfg.expansion;
    let mut env_cfg = cfg.environment.clone();
    env_cfg.period = Some(c.period);
    let p0 = env_cfg.base_kernel()?;
    let model = env_cfg.model()?;
    let mut rows = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for &eps in &c.epsilons {
        env_cfg.epsilon = eps;
        let env = env_cfg.build(cfg.seed)?;
        let ex = torus_expansion_terms(&env, 2)?;
        let (r1, r2) = (ex.residual(1), ex.residual(2));
        first.push(r1);
        second.push(r2);
        let pe = env_cfg.annealed()?;
        let args: Vec<Site> =
            Direction::all(p0.dim()).map(|e| Orientation::Reflected.argument(&Site::origin(p0.dim()), e)).collect();
        let vel = j_kernel(&pe.reversed(), &args, c.j_tol)
            .and_then(|j| velocity_coefficients(&p0, &model, eps, &j, Orientation::Reflected));
        rows.push(json!({
            "epsilon": eps,
            "residual_first_order": r1,
            "residual_second_order": r2,
            "velocity_expansion": match vel {
                Ok(v) => to_value(&v),
                Err(e) => Value::String(format!("unavailable: {e}")),
            },
        }));
    }
    let fit1 = loglog_fit(&c.epsilons, &first);
    let fit2 = loglog_fit(&c.epsilons, &second);
    let mut checks = Vec::new();
    if c.epsilons.len() >= 2 {
        checks.push(Check::new(
            "first-order-slope",
            fit1.is_some_and(|f| f.slope >= 1.7),
            describe_fit(fit1, 1.7),
        ));
        checks.push(Check::new(
            "second-order-slope",
            fit2.is_some_and(|f| f.slope >= 2.6),
            describe_fit(fit2, 2.6),
        ));
    }
    env_cfg.epsilon = c.epsilons[0];
    let env = env_cfg.build(cfg.seed)?;
    let orientation = orientation_check(&env, DEFAULT_STATE_CAP)?;
    let closed_forms = if p0.dim() == 2 && p0.is_uniform() {
        let window = Window::for_model(vec![Site::new(&[0, 0]), Site::new(&[1, 0])], &model)?;
        let oracle = torus_solve(&env, &window)?;
        let ratios = oracle.window_density_ratio();
        let mut out = Vec::new();
        for p in 0..window.n_patterns() {
            let a = window.decode(p);
            let atoms = [a[0], a[1]];
            out.push(json!({
                "pattern": a,
                "torus": ratios[p as usize],
                "explicit": explicit_2d_density(&model, &atoms, env.epsilon())?,
                "substituted": substituted_2d_density(&model, &atoms, env.epsilon())?,
            }));
        }
        Value::Array(out)
    } else {
        Value::Null
    };
    let mut csv = String::from("epsilon,residual_first_order,residual_second_order\n");
    for ((e, a), b) in c.epsilons.iter().zip(&first).zip(&second) {
        csv.push_str(&format!("{e},{a:e},{b:e}\n"));
    }
    for (label, fit) in [("slope_first_order", fit1), ("slope_second_order", fit2)] {
        if let Some(f) = fit {
            csv.push_str(&format!("# {label}={} stderr={}\n", f.slope, f.slope_stderr));
        }
    }
    let result = json!({
        "period": c.period,
        "rows": rows,
        "fit_first_order": fit1,
        "fit_second_order": fit2,
        "orientation": orientation,
        "two_site_closed_forms": closed_forms,
    });
    Ok(finish("expansion", cfg, checks, result, vec![("expansion.csv".into(), csv)]))
}

fn kalikow(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let p0 = cfg.environment.base_kernel()?;
    let model = cfg.environment.model()?;
    let eps = cfg.environment.epsilon;
    let report = kalikow_infimum(&model, &p0, eps)?;
    let bound = lemma1_bound(&model, &p0, eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, Stream::Model, 1));
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.kalikow.homogeneity_probes {
        let g: Vec<f64> = (0..2 * p0.dim()).map(|_| rng.random_range(0.05..=1.0)).collect();
        let c: f64 = rng.random_range(0.05..=1.0);
        let cg: Vec<f64> = g.iter().map(|x| c * x).collect();
        let f = kalikow_objective(&model, &p0, eps, &g)?;
        let fc = kalikow_objective(&model, &p0, eps, &cg)?;
        worst = worst.max((fc * c - f).abs());
    }
    let checks = vec![
        Check::new("homogeneity", worst <= 1e-12, format!("max |c F(cg) - F(g)| = {worst:e}")),
        Check::new(
            "infimum-vs-lower-bound",
            report.inf_value >= bound,
            format!("inf {} vs bound {bound}", report.inf_value),
        ),
    ];
    let result = json!({
        "report": report,
        "lower_bound": bound,
        "qld_constant": qld_constant(&p0),
        "homogeneity_max_error": worst,
    });
    Ok(finish("kalikow", cfg, checks, result, vec![]))
}

fn polycond(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let env = cfg.environment.build(cfg.seed)?;
    let c = &cfg.polycond;
    let sweep = poly_sweep(&env, &c.direction, &c.sizes, c.m, c.n_runs, cfg.seed, c.max_steps)?;
    let mut checks = Vec::new();
    if c.sizes.len() >= 2 {
        checks.push(Check::new(
            "decay-exponent-positive",
            sweep.decay_exponent.is_some_and(|x| x > 0.0),
            format!("{:?}", sweep.decay_exponent),
        ));
    }
    let mut csv = csv_string(|b| sweep.write_csv(b));
    if let Some(f) = sweep.fit {
        csv.push_str(&format!("# decay_exponent={} stderr={}\n", -f.slope, f.slope_stderr));
    }
    Ok(finish("polycond", cfg, checks, to_value(&sweep), vec![("polycond.csv".into(), csv)]))
}

fn torus_oracle(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let mut env_cfg = cfg.environment.clone();
    env_cfg.period = Some(cfg.torus.period);
    let env = env_cfg.build(cfg.seed)?;
    let window = Window::for_model(sites("torus.window", &cfg.torus.window, env.dim())?, env.model())?;
    let oracle = torus_solve(&env, &window)?;
    let mut checks =
        vec![Check::new("stationarity-residual", oracle.residual <= 1e-10, format!("{:e}", oracle.residual))];
    if let Some(pv) = oracle.pattern_velocity(&env, &window) {
        let gap = pv.iter().zip(&oracle.velocity).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::new("pattern-velocity-identity", gap <= 1e-12, format!("{gap:e}")));
    }
    let mut csv = String::from("pattern,p_torus,q_exact,ratio\n");
    let ratios = oracle.window_density_ratio();
    for (p, q) in oracle.q_window.iter().enumerate() {
        let tuple: Vec<String> = window.decode(p as u64).iter().map(|a| a.to_string()).collect();
        let r = ratios[p].map_or(String::from("nan"), |r| format!("{r:e}"));
        csv.push_str(&format!("{},{:e},{q:e},{r}\n", tuple.join(" "), oracle.reference_window[p]));
    }
    Ok(finish("torus-oracle", cfg, checks, to_value(&oracle), vec![("torus-oracle.csv".into(), csv)]))
}

fn verify_all(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let results = acceptance::run_all(cfg.seed);
    let checks: Vec<Check> = results
        .iter()
        .map(|r| Check::new(&format!("criterion-{}", r.id), r.passed, r.summary.clone()))
        .collect();
    let mut table = String::from("id,name,passed,summary\n");
    for r in &results {
        table.push_str(&format!("{},{},{},\"{}\"\n", r.id, r.name, r.passed, r.summary.replace('"', "'")));
    }
    Ok(finish("verify-all", cfg, checks, to_value(&results), vec![("verify-all.csv".into(), table)]))
}

