//! Named random substreams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const INIT: &str = "init";
pub const TRIPLETS: &str = "triplets";
pub const POOLS: &str = "pools";
pub const DROPOUT: &str = "dropout";
pub const SYNTHETIC: &str = "synthetic";
pub const GRAD_POINT: &str = "grad-point";
pub const HOLDOUT: &str = "holdout";

/// Independent ChaCha stream for `(seed, name)`.
pub fn substream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}
