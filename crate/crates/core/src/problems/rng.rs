//! Seeded pseudo-random numbers for instance generation.
//!
//! A fixed splitmix64 stream: the generator is fully specified here so equal
//! parameters and seed produce byte-identical instances on every platform.
//! Draws map onto a range with the modulo operator; the tiny modulo bias is
//! accepted and documented as part of the generator contract.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from `{lo, …, hi}` (inclusive).
    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        let size = (hi - lo + 1) as u64;
        lo + (self.next_u64() % size) as i64
    }
}
