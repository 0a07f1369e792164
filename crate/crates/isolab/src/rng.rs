//! Deterministic, portable random number generation for experiment seeding.
//!
//! Every optimization run in a sweep draws its starting point from
//! `SplitMix64` seeded with `base_seed + run_index`. The generator and the
//! normal sampler are fully specified here so that a port in any language
//! reproduces the same start vectors bit for bit (up to the platform's libm):
//!
//! * `SplitMix64`: state update `s += 0x9E3779B97F4A7C15`, output mixing
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
//!    z *= 0x94D049BB133111EB; z ^= z >> 31`.
//! * Uniforms in `[0,1)` take the top 53 bits: `(x >> 11) as f64 * 2^-53`.
//! * Normals use the Box-Muller transform on consecutive uniform pairs,
//!   with `u1` clamped away from zero; the pair is
//!   `r*cos(2πu2), r*sin(2πu2)` with `r = sqrt(-2 ln u1)`.

/// SplitMix64 generator (public-domain algorithm by Sebastiano Vigna).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` via rejection-free modulo of a 64-bit
    /// draw; bias is negligible for the small bounds used here.
    pub fn next_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// One standard normal draw (second Box-Muller output is discarded so
    /// the stream position depends only on the number of draws).
    pub fn next_normal(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        if u1 < 1e-300 {
            u1 = 1e-300;
        }
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Standard-normal start vector for run seeding: `seed -> N(0, scale^2)^len`.
pub fn normal_vector(seed: u64, len: usize, scale: f64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..len).map(|_| scale * rng.next_normal()).collect()
}
