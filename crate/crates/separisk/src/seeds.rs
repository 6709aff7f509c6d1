//! Counter-based RNG streams. Every stochastic step derives its generator
//! from (seed, purpose, indices), so results are independent of thread
//! scheduling and resampling one unit never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub const PURPOSE_SIMULATE: u8 = 1;
pub const PURPOSE_BOOTSTRAP: u8 = 2;
pub const PURPOSE_COVERAGE: u8 = 3;

/// Independent ChaCha stream keyed by (seed, purpose, hi, lo).
/// `hi` is truncated to 24 bits; the stream id packs purpose | hi | lo.
pub fn stream_rng(seed: u64, purpose: u8, hi: u32, lo: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let stream = ((purpose as u64) << 56) | (((hi as u64) & 0x00FF_FFFF) << 32) | (lo as u64);
    rng.set_stream(stream);
    rng
}

/// Stable derived seed for nested stages (e.g. one seed per coverage
/// replicate). SplitMix64 over the concatenated inputs.
pub fn derive_seed(seed: u64, tag: u8, index: u64) -> u64 {
    let mut z = seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(tag as u64 + 1)) ^ index;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
