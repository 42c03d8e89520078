//! Deterministic pseudo-random numbers.
//!
//! Every random draw in the crate goes through [`XorShift64Star`] so that any
//! other implementation can reproduce the exact same stream:
//!
//! ```text
//! seeding:  state = splitmix64(seed); if state == 0 { state = 0x9E3779B97F4A7C15 }
//! step:     x ^= x >> 12; x ^= x << 25; x ^= x >> 27; state = x
//! output:   x * 0x2545F4914F6CDD1D  (wrapping)
//! f64:      (output >> 11) * 2^-53, uniform in [0, 1)
//! ```
//!
//! `splitmix64(z)`: `z += 0x9E3779B97F4A7C15; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)` (all wrapping).
//!
//! Named sub-streams are derived with [`derive_seed`], which mixes the FNV-1a
//! hash of the stream name into the base seed.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed for the named sub-stream `name` of `seed`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a(name.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            state = GOLDEN;
        }
        Self { state }
    }

    pub fn from_stream(seed: u64, name: &str) -> Self {
        Self::new(derive_seed(seed, name))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` using the high bits of a 64x64 product.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}
