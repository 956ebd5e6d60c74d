//! Lattice points and unit directions of `Z^d`.
//!
//! Directions are enumerated in the fixed order `+e1, -e1, +e2, -e2, ...`, so
//! index `2i` is `+e_{i+1}` and index `2i + 1` is `-e_{i+1}`. Negation flips
//! the lowest bit of the index.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 6;

/// A point of `Z^d` for some `d <= MAX_DIM`. Unused coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    dim: u8,
    coords: [i64; MAX_DIM],
}

impl Site {
    pub fn new(coords: &[i64]) -> Site {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "site dimension must lie in 1..={MAX_DIM}"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site { dim: coords.len() as u8, coords: c }
    }

    pub fn origin(dim: usize) -> Site {
        Site::new(&vec![0; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i64 {
        self.coords[axis]
    }

    /// Raw coordinate array, zero-padded to `MAX_DIM`.
    #[inline]
    pub fn padded(&self) -> &[i64; MAX_DIM] {
        &self.coords
    }

    #[inline]
    pub fn step(&self, dir: Direction) -> Site {
        let mut out = *self;
        out.coords[dir.axis()] += dir.sign();
        out
    }

    #[inline]
    pub fn step_back(&self, dir: Direction) -> Site {
        self.step(dir.reverse())
    }

    pub fn add(&self, other: &Site) -> Site {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for (a, b) in out.coords.iter_mut().zip(other.coords.iter()) {
            *a += b;
        }
        out
    }

    pub fn neg(&self) -> Site {
        let mut out = *self;
        for a in out.coords.iter_mut() {
            *a = -*a;
        }
        out
    }

    pub fn l1_norm(&self) -> i64 {
        self.coords().iter().map(|c| c.abs()).sum()
    }

    pub fn linf_norm(&self) -> i64 {
        self.coords().iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.coords().iter().zip(v).map(|(&c, &x)| c as f64 * x).sum()
    }

    /// Coordinates reduced into `[0, period)`.
    pub fn reduce(&self, period: u32) -> Site {
        let mut out = *self;
        let p = period as i64;
        for a in out.coords[..self.dim as usize].iter_mut() {
            *a = a.rem_euclid(p);
        }
        out
    }

    /// Parity of `|x|_1`.
    pub fn parity(&self) -> u8 {
        (self.coords().iter().map(|c| c.rem_euclid(2)).sum::<i64>() % 2) as u8
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One of the `2d` nearest-neighbour unit vectors.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Direction(u8);

impl Direction {
    pub fn new(index: usize) -> Direction {
        assert!(index < 2 * MAX_DIM);
        Direction(index as u8)
    }

    /// `+e_{axis+1}` or `-e_{axis+1}`.
    pub fn along(axis: usize, positive: bool) -> Direction {
        Direction::new(2 * axis + usize::from(!positive))
    }

    pub fn all(dim: usize) -> impl Iterator<Item = Direction> + Clone {
        (0..2 * dim).map(Direction::new)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn axis(self) -> usize {
        (self.0 >> 1) as usize
    }

    #[inline]
    pub fn sign(self) -> i64 {
        if self.0 & 1 == 0 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn reverse(self) -> Direction {
        Direction(self.0 ^ 1)
    }

    pub fn vector(self, dim: usize) -> Site {
        Site::origin(dim).step(self)
    }

    /// Label such as `+e1` or `-e2`.
    pub fn label(self) -> String {
        format!("{}e{}", if self.sign() > 0 { '+' } else { '-' }, self.axis() + 1)
    }
}

/// All sites with `|x|_1 <= radius`, in lexicographic order.
pub fn l1_ball(dim: usize, radius: i64) -> Vec<Site> {
    let mut out = Vec::new();
    let mut cur = vec![-radius; dim];
    loop {
        if cur.iter().map(|c| c.abs()).sum::<i64>() <= radius {
            out.push(Site::new(&cur));
        }
        let mut axis = dim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < radius {
                cur[axis] += 1;
                for c in cur[axis + 1..].iter_mut() {
                    *c = -radius;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_enumerate_unit_vectors_once() {
        for dim in 1..=MAX_DIM {
            let mut seen: Vec<Site> = Direction::all(dim).map(|e| e.vector(dim)).collect();
            assert!(seen.iter().all(|v| v.l1_norm() == 1));
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), 2 * dim);
            for e in Direction::all(dim) {
                assert_eq!(e.reverse().reverse(), e);
                assert_eq!(e.reverse().vector(dim), e.vector(dim).neg());
            }
        }
    }

    #[test]
    fn canonical_order() {
        let labels: Vec<_> = Direction::all(2).map(Direction::label).collect();
        assert_eq!(labels, ["+e1", "-e1", "+e2", "-e2"]);
    }

    #[test]
    fn reduce_is_periodic() {
        let x = Site::new(&[5, 1]);
        assert_eq!(x.reduce(4), Site::new(&[1, 1]));
        assert_eq!(Site::new(&[-1, -5]).reduce(4), Site::new(&[3, 3]));
    }

    #[test]
    fn ball_sizes() {
        assert_eq!(l1_ball(2, 0).len(), 1);
        assert_eq!(l1_ball(2, 1).len(), 5);
        assert_eq!(l1_ball(2, 4).len(), 41);
        assert_eq!(l1_ball(3, 1).len(), 7);
    }
}
