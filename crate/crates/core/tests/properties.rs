//! Invariants that must hold for arbitrary inputs.

use proptest::prelude::*;
use rwre::ballistic::kalikow_objective;
use rwre::estimators::torus_solve;
use rwre::pattern::{PatternIndicator, Window};
use rwre::series::Richardson;
use rwre::stats::{wilson_interval, CompensatedSum};
use rwre::walk::SlabBox;
use rwre::{make_environment, Atom, Direction, PerturbationModel, Site, TransitionKernel};

fn kernel(dim: usize) -> impl Strategy<Value = TransitionKernel> {
    prop::collection::vec(0.05f64..1.0, 2 * dim).prop_map(|w| {
        let s: f64 = w.iter().sum();
        TransitionKernel::new(w.iter().map(|x| x / s).collect()).unwrap()
    })
}

/// A zero-sum perturbation model with `n` atoms in `dim` dimensions.
fn model(dim: usize, n: usize) -> impl Strategy<Value = PerturbationModel> {
    (prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2 * dim), n), prop::collection::vec(0.1f64..1.0, n))
        .prop_map(move |(zetas, weights)| {
            let total: f64 = weights.iter().sum();
            let atoms = zetas
                .into_iter()
                .zip(&weights)
                .map(|(mut z, w)| {
                    let m = z.iter().sum::<f64>() / z.len() as f64;
                    z.iter_mut().for_each(|x| *x -= m);
                    let scale = z.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-12);
                    Atom::new(z.iter().map(|x| x / scale).collect(), w / total)
                })
                .collect();
            PerturbationModel::new(dim, atoms).unwrap()
        })
}

fn site(dim: usize) -> impl Strategy<Value = Site> {
    prop::collection::vec(-50i64..50, dim).prop_map(|c| Site::new(&c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn site_kernels_are_normalized_and_elliptic(
        p0 in kernel(2), m in model(2, 3), frac in 0.0f64..0.95, seed in any::<u64>(), x in site(2)
    ) {
        let eps = frac * p0.min_prob();
        let env = make_environment(p0, eps, m, seed, None).unwrap();
        let k = env.site_kernel(&x);
        let total: f64 = k.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(k.min_prob() >= env.kappa() - 1e-15);
    }

    #[test]
    fn reversal_is_an_involution(k in kernel(3)) {
        prop_assert_eq!(k.reversed().reversed(), k.clone());
        let d: Vec<f64> = k.local_drift().iter().map(|x| -x).collect();
        prop_assert_eq!(k.reversed().local_drift(), d);
    }

    #[test]
    fn direction_reverse_and_step(i in 0usize..8, x in site(4)) {
        let e = Direction::new(i);
        prop_assert_eq!(e.reverse().reverse(), e);
        prop_assert_eq!(x.step(e).step(e.reverse()), x.clone());
        prop_assert_eq!(x.step(e).step_back(e), x);
    }

    #[test]
    fn pattern_encoding_round_trips(n_atoms in 1usize..5, atoms in prop::collection::vec(0usize..5, 3)) {
        let sites = vec![Site::new(&[0, 0]), Site::new(&[1, 0]), Site::new(&[0, 1])];
        let w = Window::new(sites, n_atoms).unwrap();
        let atoms: Vec<usize> = atoms.iter().map(|a| a % n_atoms).collect();
        prop_assert_eq!(w.decode(w.encode(&atoms)), atoms);
    }

    #[test]
    fn indicator_and_complement_partition_mass(m in model(2, 3), bits in any::<u32>()) {
        let w = Window::for_model(vec![Site::new(&[0, 0]), Site::new(&[0, 1])], &m).unwrap();
        let f = PatternIndicator::from_fn(&w, |a| bits >> (a[0] * 3 + a[1]) & 1 == 1);
        let pmf = w.product_pmf(&m);
        prop_assert!((f.mass(&pmf) + f.complement().mass(&pmf) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slab_rotation_is_orthonormal_and_maps_e1_to_direction(
        dir in prop::collection::vec(-1.0f64..1.0, 3), l in 1.0f64..20.0
    ) {
        prop_assume!(dir.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let b = SlabBox::new(&dir, l).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| b.rotation(k, i) * b.rotation(k, j)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-12);
            }
            prop_assert!((b.rotation(i, 0) - b.direction()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn slab_membership_agrees_with_longitudinal_coordinate(x in site(2), l in 1.0f64..30.0) {
        let b = SlabBox::new(&[1.0, 0.0], l).unwrap();
        prop_assert_eq!(b.contains(&x), (x.coord(0) as f64).abs() < l && (x.coord(1) as f64).abs() < 70.0 * l.powi(3));
    }

    #[test]
    fn kalikow_objective_is_homogeneous(
        m in model(2, 2), g in prop::collection::vec(0.01f64..1.0, 4), c in 0.05f64..1.0
    ) {
        let p0 = TransitionKernel::uniform(2);
        let f = kalikow_objective(&m, &p0, 0.1, &g).unwrap();
        let scaled: Vec<f64> = g.iter().map(|x| c * x).collect();
        let fc = kalikow_objective(&m, &p0, 0.1, &scaled).unwrap();
        prop_assert!((fc * c - f).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn richardson_is_exact_on_its_model(s in -5.0f64..5.0, c in prop::collection::vec(-3.0f64..3.0, 3)) {
        let ns = [8.0, 16.0, 32.0, 64.0];
        let values: Vec<f64> = ns.iter().map(|n| s + c[0] / n + c[1] / (n * n) + c[2] / (n * n * n)).collect();
        let r = Richardson::new(&values, 2.0, &[1.0, 2.0, 3.0]);
        prop_assert!((r.estimate() - s).abs() < 1e-10);
    }

    #[test]
    fn compensated_sum_recovers_small_terms(n in 1usize..2000) {
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..n {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        prop_assert!((acc.value() - n as f64 * 1e-16).abs() < 1e-20 * n as f64 + 1e-30);
    }

    #[test]
    fn wilson_interval_is_ordered_and_in_unit_range(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(k, n, 1.96);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn torus_law_is_a_probability(seed in any::<u64>(), period in 2u32..6, frac in 0.0f64..0.95) {
        let env = make_environment(
            TransitionKernel::uniform(2), frac * 0.25, PerturbationModel::standard_drift(2), seed, Some(period),
        ).unwrap();
        let w = Window::for_model(vec![Site::origin(2)], env.model()).unwrap();
        let o = torus_solve(&env, &w).unwrap();
        prop_assert!(o.pi.iter().all(|p| *p >= -1e-15));
        prop_assert!((o.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((o.q_window.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mu_delta_and_complement_sum_to_one(seed in any::<u64>(), delta in 0.05f64..0.95, atom in 0usize..2) {
        use rwre::estimators::{estimate_mu_delta, MuDeltaParams, Sampling};
        let env = make_environment(
            TransitionKernel::uniform(2), 0.1, PerturbationModel::standard_drift(2), seed, None,
        ).unwrap();
        let w = Window::for_model(vec![Site::new(&[1, 0])], env.model()).unwrap();
        let f = PatternIndicator::from_fn(&w, |a| a[0] == atom);
        let params = MuDeltaParams { delta, n_replicas: 20, seed, sampling: Sampling::Fresh };
        let est = estimate_mu_delta(&env, &w, &f, &params).unwrap();
        prop_assert!((est.estimate + est.complement_estimate - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&est.estimate));
    }

    #[test]
    fn exit_sides_partition_the_runs(seed in any::<u64>(), l in 2.0f64..6.0, runs in 100u64..300) {
        use rwre::ballistic::{poly_condition_test, PolyParams};
        let env = make_environment(
            TransitionKernel::uniform(2), 0.1, PerturbationModel::standard_drift(2), seed, None,
        ).unwrap();
        let r = poly_condition_test(&env, &[1.0, 1.0], &PolyParams::new(l, 1.0, runs, seed)).unwrap();
        prop_assert_eq!(r.front + r.back + r.lateral + r.censored, runs);
        prop_assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
    }
}
