//! Seeded randomness. Every random draw in the crate goes through a
//! `ChaCha8Rng` seeded from an explicit `u64`, so results never depend on
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{vec_norm, CVec, C64};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cell seed: `seed ^ hash(i, j)`.
pub fn cell_seed(seed: u64, i: u64, j: u64) -> u64 {
    seed ^ splitmix64(splitmix64(i).wrapping_add(j))
}

pub fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| complex_gaussian(rng))
}

/// Uniform draw from the unit sphere of C^n (normalized Gaussian).
pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    loop {
        let v = gaussian_vector(rng, n);
        let nv = vec_norm(v.as_slice());
        if nv > 1e-12 {
            return v.unscale(nv);
        }
    }
}
