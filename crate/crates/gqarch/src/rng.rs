//! Deterministic splittable random streams.
//!
//! Every draw comes from a ChaCha8 generator keyed by (seed, stream,
//! counter, domain). Monte Carlo replication k of cell c owns stream
//! (c << 32) | k and the innovation at time t owns counter t, so the
//! schedule of parallel workers can never change a draw. Keying by time
//! also means that paths simulated with different burn-in lengths share
//! their innovations on the common time range.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Key domains keep unrelated uses of the same (seed, stream) apart.
pub(crate) const DOM_INNOVATION: u8 = 1;
pub(crate) const DOM_LHS: u8 = 2;
pub(crate) const DOM_PERTURB: u8 = 3;

pub(crate) fn key_rng(seed: u64, stream: u64, counter: u64, domain: u8) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&counter.to_le_bytes());
    key[24] = domain;
    ChaCha8Rng::from_seed(key)
}
