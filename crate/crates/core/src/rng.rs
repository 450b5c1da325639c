//! Random-number plumbing.
//!
//! Observation noise is counter-based: the standard normal attached to flat
//! coefficient index `i` is computed from ChaCha8 words `4i..4i+4` of a fixed
//! stream keyed by the seed, so any coefficient can be regenerated in
//! isolation and the result never depends on evaluation order.
//!
//! Monte Carlo streams are separate ChaCha8 streams selected by a hash of
//! `(tag, a, b)`; distinct tags keep experiment stages from sharing numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seqmodel::flat_index;

const NOISE_STREAM: u64 = 0x6e6f_6973_655f_7374;
const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a tag and two counters into one 64-bit key.
#[inline]
pub fn key(tag: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(tag) ^ a) ^ b)
}

/// A ChaCha8 generator for the task identified by `(tag, a, b)` under `seed`.
pub fn task_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = key(tag, a, b);
    // the noise stream is reserved
    rng.set_stream(if stream == NOISE_STREAM { !stream } else { stream });
    rng
}

/// Derives a child seed, e.g. the observation seed of one replicate.
pub fn derive_seed(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    mix64(seed ^ key(tag, a, b))
}

/// Uniform on the open interval `(0, 1]`, safe for `ln`.
#[inline]
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
}

/// Uniform on the open interval `(0, 1)`.
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
}

#[inline]
fn box_muller(x: u64, y: u64) -> f64 {
    let u1 = ((x >> 11) + 1) as f64 * TWO_POW_M53;
    let u2 = (y >> 11) as f64 * TWO_POW_M53;
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Sequential reader over the noise stream starting at flat index `start`.
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, start: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        rng.set_word_pos(4 * start as u128);
        NoiseStream { rng }
    }

    /// The noise value for the next flat index.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let x = self.rng.next_u64();
        let y = self.rng.next_u64();
        box_muller(x, y)
    }
}

/// The standard normal noise attached to coefficient `(j, k)` under `seed`.
pub fn noise_at(seed: u64, j: u32, k: usize) -> f64 {
    NoiseStream::new(seed, flat_index(j, k)).next_normal()
}
