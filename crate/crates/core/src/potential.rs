//! Exact potential kernel of the two-dimensional simple random walk.
//!
//! Every value has the form `a(x) = r + s / pi` with rational `r, s`. The
//! diagonal is known in closed form and harmonicity off the origin determines
//! the rest. The recurrence amplifies rounding errors exponentially, so it is
//! run in exact rational arithmetic and only the final value is rounded.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::lattice::Site;

/// `1/pi` to 70 significant digits.
const INV_PI_DIGITS: &str = "3183098861837906715377675267450287240689192914809128974953346881177936";

/// Largest supported `max(|x|, |y|)`.
pub const MAX_RADIUS: i64 = 40;

fn inv_pi() -> BigRational {
    let num: BigInt = INV_PI_DIGITS.parse().unwrap();
    let den = num::pow(BigInt::from(10), INV_PI_DIGITS.len());
    BigRational::new(num, den)
}

/// `r + s / pi` with exact rational parts.
#[derive(Clone, Debug, PartialEq)]
pub struct PiAffine {
    pub rational: BigRational,
    pub pi_coefficient: BigRational,
}

impl PiAffine {
    fn zero() -> Self {
        Self { rational: BigRational::zero(), pi_coefficient: BigRational::zero() }
    }

    fn lin(terms: &[(i64, &PiAffine)]) -> Self {
        let mut out = PiAffine::zero();
        for (c, v) in terms {
            let c = BigRational::from_integer(BigInt::from(*c));
            out.rational += &c * &v.rational;
            out.pi_coefficient += &c * &v.pi_coefficient;
        }
        out
    }

    pub fn to_f64(&self) -> f64 {
        (&self.rational + &self.pi_coefficient * inv_pi()).to_f64().unwrap_or(f64::NAN)
    }
}

/// Table of `a(x, y)` for `0 <= y <= x <= radius`; other points follow by
/// symmetry.
#[derive(Clone, Debug)]
pub struct PotentialKernel2d {
    radius: i64,
    values: Vec<PiAffine>,
}

fn slot(x: i64, y: i64) -> usize {
    (x * (x + 1) / 2 + y) as usize
}

impl PotentialKernel2d {
    pub fn new(radius: i64) -> Result<Self> {
        if !(0..=MAX_RADIUS).contains(&radius) {
            return Err(Error::Precondition(format!("radius must lie in 0..={MAX_RADIUS}")));
        }
        let n = radius.max(1);
        let mut values: Vec<Option<PiAffine>> = vec![None; slot(n, n) + 1];
        let get = |v: &Vec<Option<PiAffine>>, x: i64, y: i64| -> PiAffine {
            let (a, b) = (x.abs().max(y.abs()), x.abs().min(y.abs()));
            v[slot(a, b)].clone().expect("recurrence order visits known values first")
        };
        // Diagonal: a(m, m) = (4/pi) sum_{k<=m} 1/(2k-1).
        let mut acc = BigRational::zero();
        for m in 0..=n {
            if m > 0 {
                acc += BigRational::new(BigInt::from(4), BigInt::from(2 * m - 1));
            }
            values[slot(m, m)] = Some(PiAffine { rational: BigRational::zero(), pi_coefficient: acc.clone() });
        }
        values[slot(1, 0)] =
            Some(PiAffine { rational: BigRational::one(), pi_coefficient: BigRational::zero() });
        // Offset one: harmonicity at (m, m) with the two symmetric pairs.
        for m in 1..n {
            let v = PiAffine::lin(&[(2, &get(&values, m, m)), (-1, &get(&values, m, m - 1))]);
            values[slot(m + 1, m)] = Some(v);
        }
        // Offset k >= 2: harmonicity at (y + k - 1, y) gives a(y + k, y).
        for k in 2..=n {
            for y in 0..=(n - k) {
                let x = y + k - 1;
                let v = PiAffine::lin(&[
                    (4, &get(&values, x, y)),
                    (-1, &get(&values, x - 1, y)),
                    (-1, &get(&values, x, y + 1)),
                    (-1, &get(&values, x, y - 1)),
                ]);
                values[slot(x + 1, y)] = Some(v);
            }
        }
        Ok(Self { radius: n, values: values.into_iter().map(Option::unwrap).collect() })
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn exact(&self, x: i64, y: i64) -> Option<&PiAffine> {
        let (a, b) = (x.abs().max(y.abs()), x.abs().min(y.abs()));
        (a <= self.radius).then(|| &self.values[slot(a, b)])
    }

    pub fn value(&self, x: i64, y: i64) -> Option<f64> {
        self.exact(x, y).map(PiAffine::to_f64)
    }
}

/// Potential kernel `a(x)` of the two-dimensional simple random walk, with
/// `a(0) = 0`, `a(e) = 1` and `sum_e a(x + e) = 4 a(x) + 4 delta_{x,0}`.
pub fn srw2d_potential_kernel(point: &Site) -> Result<f64> {
    if point.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: point.dim() });
    }
    let table = PotentialKernel2d::new(point.linf_norm())?;
    Ok(table.value(point.coord(0), point.coord(1)).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_values() {
        let t = PotentialKernel2d::new(3).unwrap();
        assert_eq!(t.value(0, 0), Some(0.0));
        assert_eq!(t.value(0, -1), Some(1.0));
        assert!((t.value(1, 1).unwrap() - 4.0 / PI).abs() < 1e-15);
        assert!((t.value(2, 0).unwrap() - (4.0 - 8.0 / PI)).abs() < 1e-15);
        assert!((t.value(-1, 2).unwrap() - (8.0 / PI - 1.0)).abs() < 1e-15);
        assert!((t.value(3, 0).unwrap() - (17.0 - 48.0 / PI)).abs() < 1e-14);
        let a20 = t.exact(2, 0).unwrap();
        assert_eq!(a20.rational, BigRational::from_integer(BigInt::from(4)));
        assert_eq!(a20.pi_coefficient, BigRational::from_integer(BigInt::from(-8)));
    }

    #[test]
    fn harmonic_off_origin() {
        let t = PotentialKernel2d::new(12).unwrap();
        for x in -11i64..=11 {
            for y in -11i64..=11 {
                let lap = t.value(x + 1, y).unwrap()
                    + t.value(x - 1, y).unwrap()
                    + t.value(x, y + 1).unwrap()
                    + t.value(x, y - 1).unwrap()
                    - 4.0 * t.value(x, y).unwrap();
                let want = if x == 0 && y == 0 { 4.0 } else { 0.0 };
                assert!((lap - want).abs() < 1e-12, "({x},{y}): {lap}");
            }
        }
    }

    #[test]
    fn rejects_other_dimensions() {
        assert!(srw2d_potential_kernel(&Site::new(&[1, 0, 0])).is_err());
        assert!(srw2d_potential_kernel(&Site::new(&[100, 0])).is_err());
    }
}
