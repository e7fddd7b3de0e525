//! Keyed random streams.
//!
//! Every random quantity in a run is drawn from a stream addressed by
//! `(seed, stream, index)`. The address selects a ChaCha8 key and stream
//! nonce, so a draw for neuron 7 does not depend on how many draws were
//! taken for neuron 6, and parallel trials never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Named stream identifiers. The numeric values are part of the replay
/// contract: changing one changes every run that uses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    TauMem = 1,
    TauSyn = 2,
    TauRef = 3,
    VLeak = 4,
    VThresh = 5,
    VReset = 6,
    SensorEta = 7,
    SensorTau = 8,
    AdcOffset = 9,
    MembraneNoise = 16,
    ActionTies = 17,
    InitialWeights = 18,
    Rounding = 19,
    BallReset = 32,
    Permutation = 48,
    Calibration = 64,
}

/// Counter-based generator for the entity `index` of `stream`.
pub fn keyed(seed: u64, stream: Stream, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | index as u64);
    rng
}

/// Fast sequential generator for hot loops, itself seeded from a keyed stream.
pub fn fast(seed: u64, stream: Stream, index: u32) -> Xoshiro256PlusPlus {
    let mut key = keyed(seed, stream, index);
    Xoshiro256PlusPlus::from_rng(&mut key)
}

/// 256-bit xoshiro state drawn from a keyed stream (never all zero).
pub fn xoshiro_state(seed: u64, stream: Stream, index: u32) -> [u64; 4] {
    use rand::RngCore;
    let mut key = keyed(seed, stream, index);
    loop {
        let st = [key.next_u64(), key.next_u64(), key.next_u64(), key.next_u64()];
        if st != [0; 4] {
            return st;
        }
    }
}

/// Derive a child seed, e.g. trial `i` of a study seeded with `base`.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
