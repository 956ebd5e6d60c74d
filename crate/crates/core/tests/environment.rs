//! Statistical and worked-example checks of the environment field.

use rwre::env::{check_drift_condition, DriftConditionKind, DriftConditionSpec};
use rwre::{make_environment, Direction, EnvironmentField, PerturbationModel, Site, TransitionKernel};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn standard(eps: f64, seed: u64) -> EnvironmentField {
    make_environment(TransitionKernel::uniform(2), eps, PerturbationModel::standard_drift(2), seed, None).unwrap()
}

fn chi_square_p(observed: &[f64], expected: &[f64], dof: f64) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn atom_frequencies_follow_the_model_weights() {
    let env = standard(0.1, 2024);
    let mut counts = [0.0; 2];
    for a in 0..400 {
        for b in 0..400 {
            counts[env.atom_index(&Site::new(&[a - 200, b - 200]))] += 1.0;
        }
    }
    let n = 160_000.0;
    let p = chi_square_p(&counts, &[0.75 * n, 0.25 * n], 1.0);
    assert!(p > 1e-4, "chi-square p-value {p}, counts {counts:?}");
}

#[test]
fn neighbouring_atoms_are_independent() {
    let env = standard(0.1, 7);
    let mut table = [[0.0; 2]; 2];
    for a in 0..400 {
        for b in 0..250 {
            let x = Site::new(&[a, b]);
            table[env.atom_index(&x)][env.atom_index(&x.step(Direction::new(0)))] += 1.0;
        }
    }
    let n: f64 = table.iter().flatten().sum();
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let observed: Vec<f64> = table.iter().flatten().copied().collect();
    let expected: Vec<f64> = (0..4).map(|k| rows[k / 2] * cols[k % 2] / n).collect();
    let p = chi_square_p(&observed, &expected, 1.0);
    assert!(p > 1e-4, "independence p-value {p}");
}

#[test]
fn perturbed_kernel_of_the_standard_model() {
    let env = standard(0.1, 0);
    let plus = env.atom_kernel(0).probs().to_vec();
    let minus = env.atom_kernel(1).probs().to_vec();
    let annealed = env.annealed_kernel().probs().to_vec();
    let cases = [(plus, [0.35, 0.15, 0.25, 0.25]), (minus, [0.15, 0.35, 0.25, 0.25]), (annealed, [0.3, 0.2, 0.25, 0.25])];
    for (got, want) in cases {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
    assert!((env.kappa() - 0.15).abs() < 1e-12);
}

#[test]
fn mean_drift_is_linear_in_epsilon() {
    for eps in [0.01, 0.05, 0.1, 0.2] {
        let d = standard(eps, 0).mean_drift();
        assert!((d[0] - eps).abs() < 1e-15 && d[1].abs() < 1e-15, "eps {eps}: {d:?}");
    }
    let base = TransitionKernel::new(vec![0.4, 0.1, 0.3, 0.2]).unwrap();
    let env = make_environment(base, 0.05, PerturbationModel::standard_drift(2), 0, None).unwrap();
    let d = env.mean_drift();
    assert!((d[0] - 0.35).abs() < 1e-15 && (d[1] - 0.1).abs() < 1e-15);
}

#[test]
fn same_seed_same_field_different_seed_different_field() {
    let a = standard(0.1, 5);
    let b = standard(0.1, 5);
    let c = standard(0.1, 6);
    let sites: Vec<Site> = (0..200).map(|k| Site::new(&[k, -k / 2])).collect();
    let atoms = |e: &EnvironmentField| sites.iter().map(|x| e.atom_index(x)).collect::<Vec<_>>();
    assert_eq!(atoms(&a), atoms(&b));
    assert_ne!(atoms(&a), atoms(&c));
}

#[test]
fn periodic_field_repeats() {
    let env = make_environment(TransitionKernel::uniform(2), 0.1, PerturbationModel::standard_drift(2), 3, Some(5))
        .unwrap();
    for a in -7..7 {
        for b in -7..7 {
            let x = Site::new(&[a, b]);
            assert_eq!(env.atom_index(&x), env.atom_index(&Site::new(&[a + 5, b - 10])));
        }
    }
}

#[test]
fn drift_conditions_on_the_standard_model() {
    let env = standard(0.1, 0);
    let lld = check_drift_condition(&env, &DriftConditionSpec { kind: DriftConditionKind::Lld, c: 0.5, eta: 0.0 }).unwrap();
    assert!(lld.holds && (lld.threshold - 0.05).abs() < 1e-15);
    let ld = check_drift_condition(&env, &DriftConditionSpec { kind: DriftConditionKind::Ld, c: 4.0, eta: 0.5 }).unwrap();
    assert!((ld.exponent - 1.5).abs() < 1e-15);
    assert!(!ld.holds, "0.1 > 4 * 0.1^1.5 is false");
    let qld = check_drift_condition(&env, &DriftConditionSpec { kind: DriftConditionKind::Qld, c: 9.0, eta: 0.0 }).unwrap();
    assert!(qld.holds);
}
