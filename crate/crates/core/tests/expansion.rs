//! The first-order density and velocity coefficients against exact torus
//! solutions and the closed-form planar values.

use std::f64::consts::PI;

use rwre::estimators::torus_solve;
use rwre::expansion::{
    explicit_2d_density_from, first_order_density, orientation_check, substituted_2d_density, velocity_coefficients,
    ExpansionKernel, Orientation,
};
use rwre::green::j_kernel;
use rwre::lattice::l1_ball;
use rwre::pattern::Window;
use rwre::stats::{loglog_fit, mean_stderr};
use rwre::torus::torus_expansion_terms;
use rwre::env::annealed_kernel;
use rwre::{make_environment, Atom, EnvironmentField, PerturbationModel, Site, TransitionKernel};

fn standard(eps: f64, seed: u64, period: u32) -> EnvironmentField {
    make_environment(TransitionKernel::uniform(2), eps, PerturbationModel::standard_drift(2), seed, Some(period))
        .unwrap()
}

fn two_sites(model: &PerturbationModel) -> Window {
    Window::for_model(vec![Site::new(&[0, 0]), Site::new(&[1, 0])], model).unwrap()
}

#[test]
fn truncation_error_drops_one_power_per_order() {
    let eps = [0.01, 0.02, 0.04];
    for order in [1usize, 2] {
        let res: Vec<f64> =
            eps.iter().map(|&e| torus_expansion_terms(&standard(e, 12, 4), order).unwrap().residual(order)).collect();
        let fit = loglog_fit(&eps, &res).unwrap();
        let want = order as f64 + 1.0;
        assert!((fit.slope - want).abs() <= 0.4, "order {order}: slope {} from {res:?}", fit.slope);
    }
}

#[test]
fn reflected_orientation_reproduces_first_order_term() {
    let report = orientation_check(&standard(0.05, 3, 6), 1_000_000).unwrap();
    assert_eq!(report.selected, Orientation::Reflected);
    assert!(report.reflected_error <= 1e-9 * report.h1_max.max(1.0));
    assert!(report.literal_error > 1e-3);
}

#[test]
fn planar_closed_form_from_potential_kernel_values() {
    let p0 = TransitionKernel::uniform(2);
    let model = PerturbationModel::new(
        2,
        vec![
            Atom::new(vec![1.0, -0.5, 0.25, -0.75], 0.3),
            Atom::new(vec![-0.5, 0.5, 0.0, 0.0], 0.5),
            Atom::new(vec![0.0, 0.25, -1.0, 0.75], 0.2),
        ],
    )
    .unwrap();
    let window = two_sites(&model);
    let table = j_kernel(&p0, &l1_ball(2, 3), 1e-9).unwrap();
    let eps = 0.05;
    let dens = first_order_density(&p0, eps, &model, &window, &table, Orientation::Reflected, ExpansionKernel::Base)
        .unwrap();
    for a in 0..3 {
        for b in 0..3 {
            let want = substituted_2d_density(&model, &[a, b], eps).unwrap();
            assert!((dens.evaluate(&[a, b]) - want).abs() <= 1e-7, "atoms ({a},{b})");
        }
    }
}

#[test]
fn printed_planar_coefficients() {
    let unit = |k: usize| {
        let mut x = vec![0.0; 4];
        x[k] = 1.0;
        explicit_2d_density_from(&x, 1.0) - 1.0
    };
    assert!((unit(0) + 4.0 / PI).abs() < 1e-15);
    assert!((unit(1) + 4.0 / PI).abs() < 1e-15);
    assert!((unit(2) - (8.0 / PI - 4.0)).abs() < 1e-15);
    assert_eq!(unit(3), 0.0);
}

#[test]
fn averaged_torus_window_ratio_is_first_order_density() {
    let eps = 0.05;
    let template = standard(eps, 0, 16);
    let model = template.model().clone();
    let window = two_sites(&model);
    let p_star = template.annealed_kernel().reversed();
    let table = j_kernel(&p_star, &l1_ball(2, 3), 1e-8).unwrap();
    let dens = first_order_density(
        template.base(),
        eps,
        &model,
        &window,
        &table,
        Orientation::Reflected,
        ExpansionKernel::Annealed,
    )
    .unwrap();
    let oracles: Vec<_> = (0..80).map(|s| torus_solve(&template.reseeded(500 + s), &window).unwrap()).collect();
    for p in 0..window.n_patterns() {
        let pi = p as usize;
        let q: Vec<f64> = oracles.iter().map(|o| o.q_window[pi]).collect();
        let r: Vec<f64> = oracles.iter().map(|o| o.reference_window[pi]).collect();
        let (q_mean, q_se) = mean_stderr(&q);
        let (r_mean, _) = mean_stderr(&r);
        let pmf = window.product_pmf(&model)[pi];
        let ratio = q_mean / pmf;
        let reference = r_mean / pmf;
        let predicted = dens.evaluate_pattern(&window, p);
        let slack = 4.0 * q_se / pmf + (reference - 1.0).abs() + 4.0 * eps * eps;
        assert!(
            (ratio - predicted).abs() <= slack,
            "pattern {p}: torus {ratio}, first order {predicted}, slack {slack}"
        );
    }
}

/// `(v - local mean drift) / eps^2` on `n` random tori of side `period`.
///
/// Each torus has its own empirical mean drift, which moves `v` at first
/// order. Subtracting it leaves `eps^2 d2` plus finite-size effects.
fn scaled_torus_correction(eps: f64, period: u32, n: u64) -> (f64, f64) {
    let model = PerturbationModel::standard_drift(2);
    let env = make_environment(TransitionKernel::uniform(2), eps, model.clone(), 0, Some(period)).unwrap();
    let window = Window::for_model(vec![Site::origin(2)], &model).unwrap();
    let scaled: Vec<f64> = (0..n)
        .map(|s| {
            let torus = env.reseeded(s);
            let l = period as i64;
            let local = (0..l * l)
                .map(|k| torus.atom_drift(torus.atom_index(&Site::new(&[k / l, k % l])))[0])
                .sum::<f64>()
                / (l * l) as f64;
            let v = torus_solve(&torus, &window).unwrap().velocity[0];
            (v - local) / (eps * eps)
        })
        .collect();
    mean_stderr(&scaled)
}

#[test]
fn second_velocity_coefficient_matches_torus_velocities() {
    // d2 involves J of the drifted walk, whose logarithmic growth the torus
    // cuts off at its side: agreement needs L well above 1/eps.
    let p0 = TransitionKernel::uniform(2);
    let model = PerturbationModel::standard_drift(2);
    let eps = 0.08;
    let p_star = annealed_kernel(&p0, eps, &model).unwrap().reversed();
    let table = j_kernel(&p_star, &l1_ball(2, 1), 1e-7).unwrap();
    let d2 = velocity_coefficients(&p0, &model, eps, &table, Orientation::Reflected).unwrap().d2[0];
    let (small, _) = scaled_torus_correction(eps, 12, 40);
    let (large, se) = scaled_torus_correction(eps, 24, 40);
    assert!((large - d2).abs() < (small - d2).abs(), "L=12: {small}, L=24: {large}, d2 {d2}");
    assert!((large - d2).abs() <= 4.0 * se + 0.1 * d2.abs(), "L=24: {large} +- {se}, d2 {d2}");
}
