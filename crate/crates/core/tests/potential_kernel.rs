//! The planar potential kernel against values obtained by numerical
//! quadrature of its Fourier integral (see `data/potential_kernel_oracle.py`).

use std::f64::consts::PI;

use rwre::green::j_kernel;
use rwre::lattice::l1_ball;
use rwre::potential::{srw2d_potential_kernel, PotentialKernel2d};
use rwre::{Site, TransitionKernel};

fn golden() -> Vec<(i64, i64, f64)> {
    include_str!("data/srw2d_potential_kernel.csv")
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn recurrence_matches_quadrature() {
    let table = PotentialKernel2d::new(8).unwrap();
    let rows = golden();
    assert_eq!(rows.len(), 45);
    for (x, y, a) in rows {
        let v = table.value(x, y).unwrap();
        // Values grow like (2/pi) ln r; cancellation in r + s/pi costs a few digits.
        assert!((v - a).abs() <= 1e-12 * a.max(1.0), "a({x},{y}) = {v}, quadrature {a}");
    }
}

#[test]
fn symmetries_of_the_lattice() {
    for (x, y, _) in golden() {
        let a = srw2d_potential_kernel(&Site::new(&[x, y])).unwrap();
        for (u, v) in [(y, x), (-x, y), (x, -y), (-y, -x)] {
            assert_eq!(srw2d_potential_kernel(&Site::new(&[u, v])).unwrap(), a);
        }
    }
}

#[test]
fn coefficients_of_the_two_site_expansion() {
    let a11 = srw2d_potential_kernel(&Site::new(&[1, 1])).unwrap();
    let a20 = srw2d_potential_kernel(&Site::new(&[2, 0])).unwrap();
    assert!((a11 - 4.0 / PI).abs() < 1e-15);
    assert!((a20 - (4.0 - 8.0 / PI)).abs() < 1e-15);
    // -a(2,0) = 8/pi - 4 is the e2-coefficient of the closed form.
    assert!((-a20 - (8.0 / PI - 4.0)).abs() < 1e-15);
}

#[test]
fn series_kernel_is_minus_potential_kernel() {
    let points = l1_ball(2, 4);
    let table = j_kernel(&TransitionKernel::uniform(2), &points, 1e-6).unwrap();
    assert!(table.is_converged());
    for x in &points {
        let j = table.get(x).unwrap();
        let a = srw2d_potential_kernel(x).unwrap();
        assert!((j + a).abs() <= 1e-4, "J{x} = {j}, a = {a}");
    }
    assert!(table.resolvent_residual() <= table.truncation_bound);
}
