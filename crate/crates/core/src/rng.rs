//! Deterministic RNG stream derivation.
//!
//! Every consumer gets a private ChaCha stream addressed by
//! (master_seed, round_index, lane), so batches can run in any order — or in
//! parallel — and still reproduce bit-for-bit. Lane separation also lets the
//! tests re-draw Bob's choices while keeping the source sample fixed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent draw purposes within one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lane {
    /// Source randomness: the pair's initial positions.
    Source = 0,
    /// Bob's lab randomness: s and delta.
    Bob = 1,
    /// Born-statistics oracle draws (orthogonal outcomes, Bell samples).
    Oracle = 2,
}

const LANES: u64 = 4;
const SESSION_STREAMS: u64 = 4;

/// Session-level stream (test-subset selection during sifting).
pub fn session_rng(master_seed: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(0);
    rng
}

/// Per-round stream for the given lane.
pub fn round_rng(master_seed: u64, round_index: u64, lane: Lane) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(SESSION_STREAMS + round_index.wrapping_mul(LANES) + lane as u64);
    rng
}
