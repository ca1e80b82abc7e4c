//! Seedable generator for the 16-hex-char identifiers used by entries,
//! points and solutions.
//!
//! The generator walks the SplitMix64 sequence, which is a bijection of the
//! step counter for a fixed seed, so a single generator can never repeat an
//! identifier.

#[derive(Debug, Clone)]
pub struct UidGen {
    state: u64,
}

impl UidGen {
    pub fn new(seed: u64) -> Self {
        UidGen { state: seed }
    }

    /// Next identifier: 16 lowercase hex chars (a full u64).
    pub fn next_uid(&mut self) -> String {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        format!("{z:016x}")
    }
}

/// SplitMix64 finalizer; bijective on u64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Per-iteration seed derivation for deterministic sampling streams.
pub fn mix_seed(seed: u64, iteration: u64) -> u64 {
    splitmix64(seed ^ iteration.wrapping_mul(0x9e3779b97f4a7c15))
}

/// Content-derived identifier: stable across merge order and processes.
/// Used by the crowd server so the same solution text always maps to the
/// same solution uid regardless of which participant submitted it first.
pub fn content_uid(text: &str) -> String {
    let digest = md5::compute(text.as_bytes());
    let mut out = String::with_capacity(16);
    for byte in digest.0.iter().take(8) {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
