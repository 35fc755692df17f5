//! Deterministic parallel Monte Carlo driver.
//!
//! Draws are cut into fixed-size chunks. Chunk `k` reads click times from
//! ChaCha stream `2k` and mechanism randomness from stream `2k + 1` of the
//! same seed, so results do not depend on the thread count, and two runs that
//! share a seed see identical click draws (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dist::DistProfile;
use crate::numeric::Moments;

pub const CHUNK: usize = 8192;

/// Partial results that can be combined chunk by chunk.
pub trait Accumulator: Send {
    fn merge(&mut self, other: Self);
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Accumulator for Moments {
    fn merge(&mut self, other: Self) {
        Moments::merge(self, &other);
    }
}

impl<A: Accumulator> Accumulator for Vec<A> {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

/// Seed for repeat `r` of a run seeded with `seed`.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    // splitmix64 step keeps neighbouring repeats unrelated
    let mut z = seed.wrapping_add((r as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run `n_samples` truthful click draws from `profile` through `step`.
pub fn simulate<A, I, F>(profile: &DistProfile, n_samples: usize, seed: u64, init: I, step: F) -> A
where
    A: Accumulator,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &[f64], &mut ChaCha8Rng) + Sync,
{
    let n = profile.n();
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut clicks = stream_rng(seed, 2 * k as u64);
            let mut mech = stream_rng(seed, 2 * k as u64 + 1);
            let len = CHUNK.min(n_samples - k * CHUNK);
            let mut acc = init();
            let mut t = vec![0.0; n];
            for _ in 0..len {
                profile.sample_into(&mut clicks, &mut t);
                step(&mut acc, &t, &mut mech);
            }
            acc
        })
        .collect();
    let mut it = parts.into_iter();
    let mut total = it.next().unwrap_or_else(&init);
    for p in it {
        total.merge(p);
    }
    total
}

/// Index of the largest entry; ties go to the lowest index. Also reports
/// whether a tie occurred.
pub fn argmax(t: &[f64]) -> (usize, bool) {
    let mut best = 0;
    let mut tie = false;
    for (j, &v) in t.iter().enumerate().skip(1) {
        if v > t[best] {
            best = j;
            tie = false;
        } else if v == t[best] {
            tie = true;
        }
    }
    (best, tie)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::make_uniform;

    fn mean_first(seed: u64, n: usize) -> Moments {
        let p = DistProfile::homogeneous(make_uniform(-1.0, 0.0).unwrap(), 2).unwrap();
        simulate(&p, n, seed, Moments::new, |m, t, _| m.push(t[0]))
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(mean_first(3, 20_000), mean_first(3, 20_000));
        assert_ne!(mean_first(3, 20_000).mean(), mean_first(4, 20_000).mean());
    }

    #[test]
    fn sample_count_exact() {
        assert_eq!(mean_first(1, 12_345).count(), 12_345);
        assert!((mean_first(1, 100_000).mean() + 0.5).abs() < 0.01);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[-1.0, -0.5, -0.5]), (1, true));
        assert_eq!(argmax(&[-0.1, -0.5]), (0, false));
    }

    #[test]
    fn repeat_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..100).map(|r| repeat_seed(42, r)).collect();
        assert_eq!(s.len(), 100);
    }
}
