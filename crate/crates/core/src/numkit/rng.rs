//! Reproducible randomness.
//!
//! The raw stream comes from ChaCha8 keyed by `seed_from_u64(seed)`; ChaCha
//! is counter based, so a given seed produces the same bytes on every
//! platform. Uniform doubles take the top 53 bits of a `u64` and are shifted
//! into the open interval `(0, 1)`. Standard normals use the Box–Muller
//! transform, consuming two uniforms per pair of outputs:
//!
//! ```text
//! r = sqrt(-2 ln u1),  z0 = r cos(2π u2),  z1 = r sin(2π u2)
//! ```
//!
//! Sub-seeds for independent components are derived with [`derive_seed`]:
//! FNV-1a 64 of the label, XOR the parent seed, then the SplitMix64
//! finalizer.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scalar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Fresh generator for a named sub-component of a run.
    pub fn derived(seed: u64, label: &str) -> Self {
        Self::new(derive_seed(seed, label))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        (r * angle.cos(), r * angle.sin())
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` i.i.d. N(0, 1) draws. Pairs are generated in order; for odd `n` the
/// last pair's second value is discarded.
pub fn sample_standard_normal<T: Scalar>(rng: &mut SeededRng, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let (a, b) = rng.standard_normal_pair();
        out.push(T::of(a));
        out.push(T::of(b));
    }
    out.truncate(n);
    out
}

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
