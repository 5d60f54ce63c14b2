/// 64-bit linear congruential generator: `state = state * a + c (mod 2^64)`.
///
/// Kept explicit (rather than a library RNG) so device traces are
/// reproducible from the documented constants alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lcg {
    state: u64,
    multiplier: u64,
    increment: u64,
}

/// Knuth's MMIX constants.
pub const DEFAULT_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
pub const DEFAULT_INCREMENT: u64 = 1_442_695_040_888_963_407;

impl Lcg {
    pub fn new(seed: u64, multiplier: u64, increment: u64) -> Self {
        Lcg { state: seed, multiplier, increment }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(self.multiplier).wrapping_add(self.increment);
        self.state
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }
}
