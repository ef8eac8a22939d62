//! SplitMix64 — the fixed sampling PRNG. Instance sets must reproduce
//! bit-exactly across platforms and reimplementations, so the generator is
//! pinned down to the constant level rather than left to a library default.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from `lo..=hi` by rejection, so no range has modulo bias.
    pub fn next_in_range(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        let width = (hi as i128 - lo as i128 + 1) as u64;
        if width == 0 {
            // lo = i64::MIN, hi = i64::MAX: every u64 is a valid offset.
            return lo.wrapping_add(self.next_u64() as i64);
        }
        let limit = u64::MAX - u64::MAX % width;
        loop {
            let draw = self.next_u64();
            if draw < limit {
                return (lo as i128 + (draw % width) as i128) as i64;
            }
        }
    }
}
