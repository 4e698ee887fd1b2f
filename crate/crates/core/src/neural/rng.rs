//! Counter-based random stream.
//!
//! Draw `n` of a stream with key `seed` is `mix(seed + (n + 1) * 0x9E3779B97F4A7C15)`
//! where `mix` is the SplitMix64 finalizer, i.e. the SplitMix64 sequence
//! started from state `seed`. Every draw is a pure function of
//! `(seed, counter)`. Sub-streams for a `(purpose, index)` pair get their own
//! key by hashing the purpose label and index into the parent key.
//! Uniform reals use the top 53 bits; Gaussians use Box–Muller with one
//! output per pair of uniforms.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, counter: 0 }
    }

    /// Independent stream keyed by `(seed, purpose, index)`.
    pub fn derive(seed: u64, purpose: &str, index: u64) -> Self {
        let key = mix(seed ^ mix(fnv1a(purpose)) ^ mix(index.wrapping_add(GOLDEN)).rotate_left(17));
        RngStream::new(key)
    }

    /// Sub-stream of this stream's key; does not advance `self`.
    pub fn child(&self, purpose: &str, index: u64) -> Self {
        RngStream::derive(self.seed, purpose, index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher–Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
