//! Seed derivation for independent, replayable random streams.
//!
//! Every stochastic stage (bootstrap samples, feature sampling, lien draws,
//! enrollment and dropout) pulls from a [`Stream`] whose seed is a pure
//! function of a master seed and a path of indices. Work can therefore be
//! split across threads in any order without changing the result.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

/// The generator used for every stream in the crate.
pub type Stream = Pcg64Mcg;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and an index path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p)))
}

/// A stream seeded by [`derive_seed`].
pub fn stream(master: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(master, path))
}

/// Stable 64-bit key for a string, for use in a stream path.
pub fn key_of(s: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Domain tags so that streams for different purposes never collide.
pub mod tag {
    pub const TREE: u64 = 0x7472_6565;
    pub const FEATURES: u64 = 0x6665_6174;
    pub const IMPUTE: u64 = 0x696d_7075;
    pub const PERMUTE: u64 = 0x7065_726d;
    pub const REPLICATE: u64 = 0x7265_706c;
    pub const HOUSEHOLD: u64 = 0x686f_7573;
    pub const SYNTH: u64 = 0x7379_6e74;
    pub const DISPLAY: u64 = 0x6469_7370;
}
