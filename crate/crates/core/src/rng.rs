//! Counter-based hashing for environments and seed derivation for replicas.
//!
//! Environments never store sites: the atom at a site is a pure function of
//! `(seed, coordinates)`. Walks use an ordinary stream generator seeded from a
//! separate seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lattice::Site;

/// Generator driving walk steps and killing times.
pub type WalkRng = ChaCha8Rng;

pub fn walk_rng(seed: u64) -> WalkRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a site under `seed`. Only the first `dim` coordinates contribute.
#[inline]
pub fn site_hash(seed: u64, site: &Site) -> u64 {
    let mut h = splitmix64(seed ^ 0x5851_F42D_4C95_7F2D);
    for &c in site.coords() {
        h = splitmix64(h ^ (c as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

/// Uniform in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream identifiers so that environment and walk seeds of the same replica
/// never coincide.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Environment = 0x454E_5649,
    Walk = 0x5741_4C4B,
    Model = 0x4D4F_444C,
}

/// Seed of replica `index` in `stream`, derived from `master`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream as u64).wrapping_add(index.wrapping_mul(0xA24B_AED4_963E_E407)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_every_coordinate() {
        let a = site_hash(7, &Site::new(&[1, 2]));
        assert_ne!(a, site_hash(7, &Site::new(&[2, 1])));
        assert_ne!(a, site_hash(8, &Site::new(&[1, 2])));
        assert_eq!(a, site_hash(7, &Site::new(&[1, 2])));
    }

    #[test]
    fn unit_interval() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
    }

    #[test]
    fn derived_streams_differ() {
        let e = derive_seed(1, Stream::Environment, 0);
        let w = derive_seed(1, Stream::Walk, 0);
        assert_ne!(e, w);
        assert_ne!(e, derive_seed(1, Stream::Environment, 1));
    }
}
