//! Counter-based seed derivation. Every random quantity is drawn from a
//! ChaCha stream keyed by the master seed plus a tuple of tags, so results
//! never depend on evaluation order or thread count.

use crate::linalg::{CMat, CVec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream tags. Kept distinct so that e.g. path sampling and gain sampling
/// for the same link never share a stream.
pub mod tag {
    pub const PLACEMENT: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const PATHS: u64 = 3;
    pub const ANGLES: u64 = 4;
    pub const GAINS: u64 = 5;
    pub const RCS: u64 = 6;
    pub const CLUTTER: u64 = 7;
    pub const TARGET: u64 = 8;
    pub const SCENARIO: u64 = 9;
    pub const REALIZATION: u64 = 10;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit child seed from a master seed and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}

/// One draw from CN(0, variance).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

pub fn standard_complex_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng, 1.0))
}

/// Draw from CN(0, C) given a square-root factor `S` with `S S^H = C`.
pub fn correlated_normal<R: Rng + ?Sized>(rng: &mut R, sqrt_cov: &CMat) -> CVec {
    let w = standard_complex_vector(rng, sqrt_cov.ncols());
    sqrt_cov * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_tag() {
        let a = derive_seed(7, &[1, 2]);
        let b = derive_seed(7, &[2, 1]);
        let c = derive_seed(7, &[1, 2]);
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn complex_normal_has_requested_variance() {
        let mut rng = stream(3, &[0]);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += complex_normal(&mut rng, 2.0).norm_sqr();
        }
        assert!((acc / n as f64 - 2.0).abs() < 0.05);
    }
}
