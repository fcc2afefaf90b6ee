//! Order-independent random stream derivation.
//!
//! Every random quantity in a run is drawn from its own ChaCha stream whose
//! seed is a hash of `(master_seed, tag, ids...)`. A stream therefore does not
//! depend on how many draws other streams made or in which order simulated
//! clients executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose of a derived stream. The discriminant is mixed into the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Objective = 1,
    ClientDrift = 2,
    TimeDrift = 3,
    SgdNoise = 4,
    Sampling = 5,
    Perturbation = 6,
    CoreSet = 7,
    Mcmc = 8,
    Partition = 9,
    Data = 10,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed, a tag and an id path into a 64-bit stream seed.
pub fn derive_seed(master: u64, tag: StreamTag, ids: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(tag as u64));
    for &id in ids {
        h = splitmix64(h ^ splitmix64(id.wrapping_add(GOLDEN)));
    }
    h
}

pub fn stream(master: u64, tag: StreamTag, ids: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, tag, ids))
}
