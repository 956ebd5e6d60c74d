//! Centered kernel of planar nearest-neighbour walks by Fourier inversion.
//!
//! `J(x) = (2 pi)^-2 int (exp(i theta.x) - 1) / (1 - phi(theta)) d theta`.
//! For fixed `theta2` the `theta1` integral is a contour integral over the
//! unit circle with one simple pole inside, so only a bounded integral over
//! `theta2` remains. That one is done by tanh-sinh quadrature, which copes
//! with the square-root behaviour at `theta2 = 0` of walks without drift
//! along `e1`.
//!
//! Cost does not depend on the size of the drift, unlike time stepping,
//! whose box grows like `1 / |drift|`.

use std::f64::consts::PI;

use num::complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::{Direction, Site};

/// Finest tanh-sinh step tried.
const MIN_STEP: f64 = 1.0 / 256.0;

/// `t` range of the tanh-sinh sum; beyond it the weights are below 1e-30.
const T_MAX: f64 = 4.0;

/// `ln(1 + z)` without cancellation for small `z`.
fn ln_1p(z: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * z.re + z.norm_sqr()).ln_1p();
    Complex64::new(re, z.im.atan2(1.0 + z.re))
}

/// `exp(z) - 1` without cancellation for small `z`.
fn exp_m1(z: Complex64) -> Complex64 {
    let s = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * z.im.cos() - 2.0 * s * s, z.re.exp() * z.im.sin())
}

/// `e^{i theta} - 1`.
fn cis_m1(theta: f64) -> Complex64 {
    let s = (0.5 * theta).sin();
    Complex64::new(-2.0 * s * s, theta.sin())
}

/// Roots `1 + delta` of `lead z^2 - A z + trail`, returned as
/// `(delta_inside, delta_outside)` relative to the unit circle.
///
/// With `A = lead + trail - c'` the shifted quadratic is
/// `lead delta^2 + (lead - trail + c') delta + c' = 0`.
fn shifted_roots(lead: f64, trail: f64, c_prime: Complex64) -> (Complex64, Complex64) {
    let b = Complex64::new(lead - trail, 0.0) + c_prime;
    let disc = (b * b - 4.0 * lead * c_prime).sqrt();
    let q = if (b + disc).norm() >= (b - disc).norm() { -(b + disc) / 2.0 } else { -(b - disc) / 2.0 };
    let d1 = q / lead;
    let d2 = if q.norm() > 0.0 { c_prime / q } else { d1 };
    if (Complex64::new(1.0, 0.0) + d1).norm() < (Complex64::new(1.0, 0.0) + d2).norm() {
        (d1, d2)
    } else {
        (d2, d1)
    }
}

/// Real part of the `theta1`-integrated integrand of `J(x)` at `theta2`.
fn integrand(probs: [f64; 4], x: [i64; 2], theta2: f64) -> f64 {
    let [a, b, c, f] = probs;
    // 1 - phi = (a + b - c') - a z - b / z with c' = c (e^{it} - 1) + f (e^{-it} - 1).
    let c_prime = c * cis_m1(theta2) + f * cis_m1(-theta2);
    // For x1 < 0 the substitution z -> 1/z swaps the roles of a and b.
    let (lead, trail, n) = if x[0] >= 0 { (a, b, x[0]) } else { (b, a, -x[0]) };
    let (d_in, d_out) = shifted_roots(lead, trail, c_prime);
    let phase = Complex64::new(0.0, theta2 * x[1] as f64) + ln_1p(d_in) * n as f64;
    let num = exp_m1(phase);
    (-num / (lead * (d_in - d_out))).re
}

/// Tanh-sinh rule on `[0, pi]` with step `h`.
fn tanh_sinh(h: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let n = (T_MAX / h).ceil() as i64;
    let mut acc = crate::stats::CompensatedSum::new();
    for k in -n..=n {
        let t = k as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let cu = u.cosh();
        let w = 0.25 * PI * PI * t.cosh() / (cu * cu);
        if !(w > 0.0) || !w.is_finite() {
            continue;
        }
        // theta = pi / (1 + e^{-2u}) keeps full precision near both ends.
        let theta = PI / (1.0 + (-2.0 * u).exp());
        if theta <= 0.0 || theta >= PI {
            continue;
        }
        acc.add(w * f(theta));
    }
    h * acc.value()
}

/// `J(x)` and an a posteriori error estimate (difference between the last
/// two tanh-sinh levels).
pub(crate) fn planar_j(kernel: &TransitionKernel, x: &Site, tol: f64) -> Result<(f64, f64)> {
    if kernel.dim() != 2 {
        return Err(Error::UnsupportedDimension(kernel.dim()));
    }
    if !(kernel.min_prob() > 0.0) {
        return Err(Error::Precondition("Fourier route needs every step probability positive".into()));
    }
    if x.l1_norm() == 0 {
        return Ok((0.0, 0.0));
    }
    let p = |i| kernel.prob(Direction::new(i));
    let probs = [p(0), p(1), p(2), p(3)];
    let pt = [x.coord(0), x.coord(1)];
    // Integrand at -theta2 is the conjugate, so J = (1/pi) int_0^pi Re F.
    let f = |t: f64| integrand(probs, pt, t) / PI;
    let mut h = 0.5;
    let mut prev = tanh_sinh(h, &f);
    loop {
        h *= 0.5;
        let cur = tanh_sinh(h, &f);
        let err = (cur - prev).abs();
        if err <= 0.1 * tol || h <= MIN_STEP {
            return Ok((cur, err));
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_walk_matches_potential_kernel() {
        let k = TransitionKernel::uniform(2);
        let (j, err) = planar_j(&k, &Site::new(&[1, 0]), 1e-12).unwrap();
        assert!((j + 1.0).abs() < 1e-10, "{j} {err}");
        let (j, _) = planar_j(&k, &Site::new(&[1, 1]), 1e-12).unwrap();
        assert!((j + 4.0 / PI).abs() < 1e-10, "{j}");
        let (j, _) = planar_j(&k, &Site::new(&[0, -2]), 1e-12).unwrap();
        assert!((j + 4.0 - 8.0 / PI).abs() < 1e-10, "{j}");
    }

    #[test]
    fn helpers_are_accurate_near_zero() {
        let z = Complex64::new(1e-12, -3e-13);
        assert!((ln_1p(z) - z).norm() < 1e-23);
        assert!((exp_m1(z) - z).norm() < 1e-23);
        assert!((cis_m1(1e-9) - Complex64::new(-5e-19, 1e-9)).norm() < 1e-25);
    }

    #[test]
    fn zero_probabilities_are_rejected() {
        let k = TransitionKernel::new(vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        assert!(planar_j(&k, &Site::new(&[1, 0]), 1e-8).is_err());
    }
}
