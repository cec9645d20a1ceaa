//! Counter-based random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha stream keyed by
//! `(seed, domain)` and selected by a per-item counter (trajectory index,
//! Haar draw, partition index). An item's numbers therefore depend only on
//! its own key, never on how items are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates streams drawn from the same user seed for different purposes.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Haar = 0x4841_4152,
    Ensemble = 0x454e_5345,
    Faker = 0x4641_4b45,
    Partition = 0x5041_5254,
}

/// Returns the stream for item `counter` under `(seed, domain)`.
pub fn stream(seed: u64, domain: Domain, counter: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(counter);
    rng
}
