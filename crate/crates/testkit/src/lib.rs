//! Fixture generators and brute-force oracles for the lhst test suites.
//!
//! Nothing in here depends on `lhst-core`: every oracle works on plain
//! vectors and edge lists so it cannot share a code path with the
//! implementation it checks.

pub mod dag;
pub mod numeric;
pub mod pseudo;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded RNG used by all fixtures.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
