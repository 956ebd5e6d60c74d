//! Convergence acceleration for slowly converging sequences.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Richardson tableau for a sequence sampled on a geometric grid.
///
/// The sequence is assumed to behave like
/// `S(n) = S + c_0 n^-k_0 + c_1 n^-k_1 + ...` with `n_{i+1} = ratio * n_i`.
/// Level `j` eliminates the term `n^-k_{j-1}`; `levels[0]` is the raw sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Richardson {
    pub ratio: f64,
    pub exponents: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
}

impl Richardson {
    pub fn new(values: &[f64], ratio: f64, exponents: &[f64]) -> Self {
        assert!(ratio > 1.0, "grid ratio must exceed 1");
        let mut levels = vec![values.to_vec()];
        for &k in exponents {
            let prev = levels.last().unwrap();
            if prev.len() < 2 {
                break;
            }
            let f = ratio.powf(k);
            let next = prev.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
            levels.push(next);
        }
        let used = levels.len() - 1;
        Self { ratio, exponents: exponents[..used].to_vec(), levels }
    }

    /// Most extrapolated value.
    pub fn estimate(&self) -> f64 {
        *self.levels.last().and_then(|l| l.last()).expect("non-empty sequence")
    }

    /// Difference between the two most refined extrapolants, used as an error
    /// estimate for [`Richardson::estimate`].
    pub fn error_estimate(&self) -> f64 {
        let n = self.levels.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let a = *self.levels[n - 1].last().unwrap();
        let b = *self.levels[n - 2].last().unwrap();
        (a - b).abs()
    }

    /// Last entry of each level, from raw to most extrapolated.
    pub fn diagonal(&self) -> Vec<f64> {
        self.levels.iter().map(|l| *l.last().unwrap()).collect()
    }
}

/// `sum_n s^n a_n` for the supplied terms.
pub fn abel_sum(terms: &[f64], s: f64) -> f64 {
    let mut acc = crate::stats::CompensatedSum::new();
    let mut w = 1.0;
    for a in terms {
        acc.add(w * a);
        w *= s;
    }
    acc.value()
}

/// Fits `A(h) = c_0 + c_1 h ln h + c_2 h` through three points, `h = 1 - s`,
/// and returns `c_0`. This is the leading behaviour of Abel means of series
/// whose terms decay like `1/n^2`.
pub fn abel_extrapolate(h: [f64; 3], values: [f64; 3]) -> Option<f64> {
    let m = Matrix3::from_fn(|i, j| match j {
        0 => 1.0,
        1 => h[i] * h[i].ln(),
        _ => h[i],
    });
    let rhs = Vector3::from_row_slice(&values);
    m.lu().solve(&rhs).map(|c| c[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_removes_power_terms_exactly() {
        let f = |n: f64| 2.5 + 3.0 / n - 7.0 / (n * n) + 0.5 / n.powi(3);
        let ns = [16.0, 32.0, 64.0, 128.0];
        let vals: Vec<f64> = ns.iter().map(|&n| f(n)).collect();
        let r = Richardson::new(&vals, 2.0, &[1.0, 2.0, 3.0]);
        assert!((r.estimate() - 2.5).abs() < 1e-12);
        assert_eq!(r.levels.len(), 4);
    }

    #[test]
    fn richardson_half_integer_exponents() {
        let f = |n: f64| -1.0 + 0.3 / n.sqrt() + 2.0 / n.powf(1.5);
        let vals: Vec<f64> = [10.0, 20.0, 40.0].iter().map(|&n| f(n)).collect();
        let r = Richardson::new(&vals, 2.0, &[0.5, 1.5]);
        assert!((r.estimate() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn richardson_truncates_unused_exponents() {
        let r = Richardson::new(&[1.0, 1.5], 2.0, &[1.0, 2.0, 3.0]);
        assert_eq!(r.exponents, vec![1.0]);
        assert_eq!(r.estimate(), 2.0);
    }

    #[test]
    fn abel_of_geometric_series() {
        let terms: Vec<f64> = (0..200).map(|n| 0.5f64.powi(n)).collect();
        assert!((abel_sum(&terms, 1.0) - 2.0).abs() < 1e-14);
        assert!((abel_sum(&terms, 0.5) - 1.0 / 0.75).abs() < 1e-14);
    }

    #[test]
    fn abel_fit_recovers_constant() {
        let model = |h: f64| 0.7 - 1.3 * h * h.ln() + 0.2 * h;
        let hs = [0.1, 0.05, 0.025];
        let c0 = abel_extrapolate(hs, hs.map(model)).unwrap();
        assert!((c0 - 0.7).abs() < 1e-12);
    }
}
