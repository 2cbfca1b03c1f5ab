//! Seed derivation. One master seed fans out into independent streams, one
//! per purpose, so that e.g. drawing dropout masks never perturbs client
//! sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Partition = 2,
    Sampling = 3,
    ClientTrain = 4,
    Masks = 5,
    SharedPool = 6,
    PoolCopy = 7,
    Warmstart = 8,
    Synthetic = 9,
    Gamma = 10,
    Pretrain = 11,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based derivation: `(master, stream, a, b)` maps to a 64-bit seed.
pub fn derive(master: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, stream: Stream, a: u64, b: u64) -> ChaCha8Rng {
    rng_from(derive(master, stream, a, b))
}
