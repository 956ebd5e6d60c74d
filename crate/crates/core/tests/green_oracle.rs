//! Green functions of drifted kernels against an absorbing-box linear solve.

use rwre::green::{green, green_box_solve, j_kernel};
use rwre::lattice::l1_ball;
use rwre::{Error, Site, TransitionKernel};

fn annealed_standard() -> TransitionKernel {
    TransitionKernel::new(vec![0.3, 0.2, 0.25, 0.25]).unwrap()
}

#[test]
fn drifted_green_matches_box_solve() {
    let k = annealed_standard();
    let points = vec![Site::origin(2), Site::new(&[1, 0]), Site::new(&[-1, 0]), Site::new(&[0, 1]), Site::new(&[2, -1])];
    let table = green(&k, &points, 1e-9).unwrap();
    let oracle = green_box_solve(&k, 100, &points).unwrap();
    for (x, want) in points.iter().zip(&oracle) {
        let got = table.get(x).unwrap();
        assert!((got - want).abs() <= 1e-6, "G{x}: {got} vs box solve {want}");
    }
    assert!(table.resolvent_residual() <= table.truncation_bound);
}

#[test]
fn reversed_kernel_reflects_green_function() {
    let k = annealed_standard();
    let points = l1_ball(2, 3);
    let g = green(&k, &points, 1e-10).unwrap();
    let gs = green(&k.reversed(), &points, 1e-10).unwrap();
    for x in &points {
        let (a, b) = (gs.get(x).unwrap(), g.get(&x.neg()).unwrap());
        assert!((a - b).abs() <= 1e-9, "G*({x}) = {a}, G(-x) = {b}");
    }
}

#[test]
fn drifted_j_is_green_difference() {
    let k = annealed_standard();
    let points = l1_ball(2, 2);
    let g = green(&k, &points, 1e-10).unwrap();
    let j = j_kernel(&k, &points, 1e-9).unwrap();
    let g0 = g.get(&Site::origin(2)).unwrap();
    for x in &points {
        let want = if x.l1_norm() == 0 { 0.0 } else { g.get(x).unwrap() - g0 };
        assert!((j.get(x).unwrap() - want).abs() <= 1e-8);
    }
}

#[test]
fn transient_three_dimensional_walk() {
    // G(0) of the simple walk on Z^3 is 1.516386059...
    let g = green(&TransitionKernel::uniform(3), &[Site::new(&[1, 0, 0])], 1e-4).unwrap();
    let g0 = g.get(&Site::origin(3)).unwrap();
    assert!((g0 - 1.516_386_059_151_978).abs() <= g.truncation_bound.max(1e-4), "{g0}");
    // Harmonic off the origin: G(e1) = G(0) - 1.
    let ge = g.get(&Site::new(&[1, 0, 0])).unwrap();
    assert!((ge - (g0 - 1.0)).abs() <= 2.0 * g.truncation_bound);
}

#[test]
fn planar_recurrent_kernel_is_rejected() {
    assert_eq!(green(&TransitionKernel::uniform(2), &[Site::new(&[1, 0])], 1e-6).unwrap_err(), Error::RecurrentKernel);
}
