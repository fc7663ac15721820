//! Counter-based random streams.
//!
//! Every `(seed, key...)` tuple opens an independent splitmix64 stream, so a
//! per-(path, step) stream can be created in O(1) without touching any other
//! stream. Path counts can grow without reshuffling earlier paths, and the
//! draw for a given (seed, path, step) never depends on scheduling.

/// Splitmix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    /// Opens the stream identified by `seed` and a position-dependent key.
    pub fn keyed(seed: u64, key: &[u64]) -> Self {
        let mut s = mix(seed ^ 0x6A09_E667_F3BC_C909);
        for (i, k) in key.iter().enumerate() {
            s = mix(s ^ k.wrapping_add((i as u64 + 1).wrapping_mul(GAMMA)));
        }
        CounterRng { state: s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform draw in (0, 1]; never zero, so logarithms are safe.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// One standard normal draw (Box-Muller, cosine branch).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Two independent standard normal draws from one Box-Muller pair.
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        (mag * c, mag * s)
    }
}
