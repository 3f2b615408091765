//! Counter-based deterministic RNG.
//!
//! Every consumer of randomness in this crate derives a private stream from a
//! `(seed, stream)` pair through `CounterRng::from_stream`. Streams are pure
//! functions of their two keys, so a simulation partitioned across any number
//! of workers reproduces the single-threaded result bit for bit: worker count
//! and scheduling never touch the random sequence.
//!
//! The generator is SplitMix64 (Steele et al.), seeded through two extra
//! finalizer rounds so that nearby `(seed, stream)` pairs land on well
//! separated states. It is fast, portable, and statistically solid for the
//! sample sizes used here; it is not cryptographic.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    /// Stream `stream` of the generator family keyed by `seed`.
    pub fn from_stream(seed: u64, stream: u64) -> Self {
        let a = mix64(seed ^ 0x6A09_E667_F3BC_C909);
        let b = mix64(stream.wrapping_mul(GOLDEN_GAMMA) ^ 0xBB67_AE85_84CA_A73B);
        CounterRng {
            state: mix64(a ^ b.rotate_left(32)),
        }
    }

    /// Single-stream generator (stream 0).
    pub fn new(seed: u64) -> Self {
        Self::from_stream(seed, 0)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`; degenerate ranges return `lo`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Exponential deviate with unit mean, strictly positive and finite.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        // 1 - u is in (0, 1], so the log is finite.
        -(1.0 - self.next_f64()).ln()
    }
}

/// Derives a child seed for a named substream; used to give phantom
/// generation, simulation and noise injection independent families from one
/// experiment seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix64(seed ^ salt.wrapping_mul(GOLDEN_GAMMA))
}
