//! Deterministic, splittable random number generation.
//!
//! Experiments derive every stream of randomness (morphology draws, network
//! initialization, exploration noise, replay sampling, ...) from a master
//! seed plus a purpose label. Streams are independent SplitMix64 sequences
//! keyed by hashing the label into the seed, so adding a new stream (or more
//! seeds) never perturbs the draws of an existing one.

/// 64-bit FNV-1a, used to fold purpose labels into stream keys.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A small deterministic generator (SplitMix64 core).
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Derive an independent stream from `(master, label, indices...)`.
    ///
    /// The label keeps seeding domains disjoint: e.g. training episodes and
    /// test-set generation never share draws even under equal integers.
    pub fn stream(master: u64, label: &str, indices: &[u64]) -> Self {
        let mut key = master ^ fnv1a(label.as_bytes());
        for &ix in indices {
            // mix each index through one splitmix round
            let mut s = key ^ ix.wrapping_mul(0xd6e8_feb8_6659_fd93);
            key = splitmix64(&mut s);
        }
        Rng { state: key }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Standard normal via Box-Muller (one value per call, no caching, so
    /// the stream stays position-independent).
    pub fn normal(&mut self) -> f64 {
        // u in (0,1] to keep ln() finite
        let u = 1.0 - self.uniform();
        let v = self.uniform();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
