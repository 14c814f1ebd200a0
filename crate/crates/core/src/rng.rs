//! Per-sample random streams.
//!
//! Every Monte-Carlo sample draws from its own ChaCha8 stream whose key is
//! built from `(master_seed, round)` and whose 64-bit stream id is the sample
//! index. A sample's draws therefore depend only on that triple, never on
//! which worker evaluates it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

const ROUND_KEY_DOMAIN: u64 = 0x7265_7369_6c73_696d; // "resilsim"

pub fn round_key(master_seed: u64, round: u32) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..12].copy_from_slice(&round.to_le_bytes());
    key[16..24].copy_from_slice(&ROUND_KEY_DOMAIN.to_le_bytes());
    key
}

pub fn sample_stream(master_seed: u64, round: u32, sample: u64) -> SampleRng {
    stream_from_key(round_key(master_seed, round), sample)
}

#[inline]
pub fn stream_from_key(key: [u8; 32], sample: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(sample);
    rng
}
