//! Seeded random streams.
//!
//! Every Monte Carlo sample is drawn from its own ChaCha stream, keyed by a
//! 64-bit seed, a domain tag and the sample index. Results therefore do not
//! depend on how samples are spread over worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

/// Stream domain tags, so that unrelated draws under one seed never overlap.
pub mod domain {
    pub const GFF: u64 = 0x6766_6600;
    pub const COLLAPSE: u64 = 0x636f_6c00;
    pub const EXCURSION: u64 = 0x6578_6300;
    pub const HITTING: u64 = 0x6869_7400;
    pub const PATHS: u64 = 0x7061_7400;
}

/// Below this mean, Poisson counts are drawn by sequential inversion.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = splitmix64(seed);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

/// The generator for sample `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}

/// Draws `count` samples in parallel, sample `i` from `stream(seed, domain, i)`.
/// Output order is the index order.
pub fn par_samples<T, F>(count: usize, seed: u64, domain: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| f(&mut stream(seed, domain, i as u64)))
        .collect()
}

/// Exact Poisson variate with the given mean.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    debug_assert!(mean >= 0.0 && mean.is_finite());
    if mean <= 0.0 {
        return 0;
    }
    if mean < POISSON_INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            let next = cdf + p;
            if next == cdf {
                // cdf has saturated below u through rounding; u sits in the
                // last ~1e-16 of the tail.
                break;
            }
            cdf = next;
        }
        k
    } else {
        Poisson::new(mean)
            .expect("finite positive mean")
            .sample(rng) as u64
    }
}
