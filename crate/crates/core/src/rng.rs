//! Counter-based seed derivation.
//!
//! Every random stream is keyed by `(base seed, stage name, counter)`, so a
//! stage (or a single split inside it) can be re-run on its own and still
//! draw the same numbers as inside a full pipeline run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive_seed(base: u64, stage: &str, counter: u64) -> u64 {
    splitmix64(splitmix64(base ^ fnv1a(stage)).wrapping_add(counter))
}

pub fn stage_rng(base: u64, stage: &str, counter: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(base, stage, counter))
}
