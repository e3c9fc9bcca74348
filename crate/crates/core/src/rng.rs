//! Seedable random streams.
//!
//! Every random draw in the crate comes from [`Rng`] (xoshiro256**). A run
//! seed fans out into independent substreams by index:
//! `substream(seed, i) = Xoshiro256StarStar::seed_from_u64(seed ^ splitmix64(i))`,
//! where `seed_from_u64` expands the 64-bit seed into the 256-bit state with
//! the standard splitmix64 sequence. Nested streams (trial, then fold) use
//! [`nested_seed`].

use rand::SeedableRng;
pub use rand_xoshiro::Xoshiro256StarStar as Rng;

/// One step of the splitmix64 generator applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream_seed(seed: u64, index: u64) -> u64 {
    seed ^ splitmix64(index)
}

pub fn substream(seed: u64, index: u64) -> Rng {
    Rng::seed_from_u64(substream_seed(seed, index))
}

/// Seed for a two-level substream. The intermediate seed is remixed so that
/// `(a, b)` and `(b, a)` give different streams.
pub fn nested_seed(seed: u64, outer: u64, inner: u64) -> u64 {
    substream_seed(splitmix64(substream_seed(seed, outer)), inner)
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
