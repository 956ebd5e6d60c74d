//! Distributional checks of single walks.

use rwre::rng::walk_rng;
use rwre::walk::{killed_run, sample_killing_time, WalkState};
use rwre::{make_environment, Direction, EnvironmentField, PerturbationModel, Site, TransitionKernel};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn srw(dim: usize) -> EnvironmentField {
    make_environment(TransitionKernel::uniform(dim), 0.0, PerturbationModel::zero(dim), 0, None).unwrap()
}

#[test]
fn killing_time_has_geometric_mean() {
    for delta in [0.5, 0.9, 0.99] {
        let mut rng = walk_rng(17);
        let n = 200_000;
        let taus: Vec<f64> = (0..n).map(|_| sample_killing_time(&mut rng, delta) as f64).collect();
        let mean = taus.iter().sum::<f64>() / n as f64;
        let want = delta / (1.0 - delta);
        let sd = delta.sqrt() / (1.0 - delta);
        assert!((mean - want).abs() <= 4.0 * sd / (n as f64).sqrt(), "delta {delta}: {mean} vs {want}");
    }
}

#[test]
fn killing_time_point_masses() {
    let delta = 0.6;
    let mut rng = walk_rng(3);
    let n = 100_000u32;
    let mut counts = [0.0; 4];
    for _ in 0..n {
        let t = sample_killing_time(&mut rng, delta) as usize;
        counts[t.min(3)] += 1.0;
    }
    let probs = [0.4, 0.24, 0.144, 0.216];
    let stat: f64 = counts.iter().zip(probs).map(|(o, p)| (o - p * n as f64).powi(2) / (p * n as f64)).sum();
    assert!(1.0 - ChiSquared::new(3.0).unwrap().cdf(stat) > 1e-4);
}

#[test]
fn killed_path_has_tau_steps_of_unit_length() {
    let env = srw(2);
    let run = killed_run(&env, 0.95, Site::origin(2), 8).unwrap();
    assert_eq!(run.path.len() as u64, run.tau + 1);
    assert!(run.path.windows(2).all(|w| w[0].add(&w[1].neg()).l1_norm() == 1));
    assert!(killed_run(&env, 1.0, Site::origin(2), 8).is_err());
}

#[test]
fn simple_walk_picks_each_direction_equally() {
    for dim in [2, 3] {
        let env = srw(dim);
        let mut walker = WalkState::new(Site::origin(dim), 99);
        let n = 120_000;
        let mut counts = vec![0.0; 2 * dim];
        for _ in 0..n {
            counts[walker.advance(&env).index()] += 1.0;
        }
        let e = n as f64 / (2 * dim) as f64;
        let stat: f64 = counts.iter().map(|o| (o - e) * (o - e) / e).sum();
        let p = 1.0 - ChiSquared::new((2 * dim - 1) as f64).unwrap().cdf(stat);
        assert!(p > 1e-4, "dim {dim}: {counts:?}");
    }
}

#[test]
fn perturbed_site_uses_its_own_kernel() {
    let env = make_environment(
        TransitionKernel::uniform(2),
        0.1,
        PerturbationModel::standard_drift(2),
        4,
        None,
    )
    .unwrap();
    let start = Site::new(&[3, -2]);
    let atom = env.atom_index(&start);
    let n = 100_000u64;
    let mut counts = [0.0; 4];
    for k in 0..n {
        let mut walker = WalkState::new(start, k);
        counts[walker.advance(&env).index()] += 1.0;
    }
    let probs = env.atom_kernel(atom).probs();
    let stat: f64 = counts.iter().zip(probs).map(|(o, p)| (o - p * n as f64).powi(2) / (p * n as f64)).sum();
    assert!(1.0 - ChiSquared::new(3.0).unwrap().cdf(stat) > 1e-4, "{counts:?} vs {probs:?}");
}

#[test]
fn walks_are_reproducible_from_their_seed() {
    let env = make_environment(TransitionKernel::uniform(2), 0.1, PerturbationModel::standard_drift(2), 1, None).unwrap();
    let path = |seed| {
        let mut w = WalkState::new(Site::origin(2), seed);
        (0..1000).map(|_| w.advance(&env)).collect::<Vec<Direction>>()
    };
    assert_eq!(path(5), path(5));
    assert_ne!(path(5), path(6));
}
