//! Deterministic random number generation.
//!
//! The generator is xoshiro256++ seeded through splitmix64, with normal
//! draws via the polar-free Box-Muller transform. The exact algorithms are
//! spelled out here so that a reimplementation in another language can
//! reproduce every stream bit for bit:
//!
//! * Seeding: starting from the 64-bit seed, four successive outputs of
//!   splitmix64 fill the xoshiro256++ state words `s[0..4]`.
//! * `next_u64`: the xoshiro256++ update (Blackman & Vigna),
//!   `result = rotl(s0 + s3, 23) + s0`.
//! * `uniform`: `(next_u64() >> 11) as f64 * 2^-53`, uniform in `[0, 1)`.
//! * `standard_normal`: draws `u1 = 1 - uniform()` (in `(0, 1]`) and
//!   `u2 = uniform()`, returns `sqrt(-2 ln u1) * cos(2 pi u2)`. Each call
//!   consumes exactly two `next_u64` outputs; the sine branch is discarded.
//! * `below(n)`: `next_u64() % n`. The modulo bias is below 2^-32 for every
//!   `n` used in this crate.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a stream tag.
///
/// Defined as `splitmix64` applied to `seed + splitmix64(tag)` (wrapping),
/// taking the first output in both cases.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut s = tag;
    let mixed_tag = splitmix64(&mut s);
    let mut t = seed.wrapping_add(mixed_tag);
    splitmix64(&mut t)
}

/// A seeded xoshiro256++ generator.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for w in &mut s {
            *w = splitmix64(&mut sm);
        }
        // All-zero state is the one forbidden xoshiro state.
        if s == [0, 0, 0, 0] {
            s[0] = 1;
        }
        Self { s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let [s0, s1, s2, s3] = self.s;
        let result = s0.wrapping_add(s3).rotate_left(23).wrapping_add(s0);
        let t = s1 << 17;
        let mut s = [s0, s1, s2 ^ s0, s3 ^ s1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        self.s = s;
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw via Box-Muller (cosine branch only).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Uniform integer in `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `count` standard-normal draws.
    pub fn normal_vec(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.standard_normal()).collect()
    }
}
