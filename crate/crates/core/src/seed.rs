//! Counter-based seed derivation: every random stream is addressed by
//! (master seed, module tag, sample index).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a of the tag, so tags can be plain strings.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    splitmix(splitmix(master ^ tag_hash(tag)) ^ splitmix(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tag, index))
}
