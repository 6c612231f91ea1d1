//! Seeded substreams.
//!
//! One master 64-bit seed drives everything. Runs get independent ChaCha
//! streams by run index; the Poisson field gets one stream per tile, keyed by
//! the tile's lattice coordinates, so a realized field is a deterministic
//! function of the seed regardless of the order in which tiles are queried.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to spread structured keys over 64 bits.
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Drive stream for one run of an ensemble.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream 0 is reserved for single-run commands; ensembles use 1..=runs.
    rng.set_stream(run_index);
    rng
}

/// Service-time stream of a direct (field-backed) simulation. Kept separate
/// from the tile streams so field queries never perturb the service times.
pub fn service_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x5e72_1c65_u64));
    rng.set_stream(u64::MAX);
    rng
}

/// Per-tile stream for the space-time Poisson field.
pub fn tile_rng(seed: u64, ix: i64, it: i64) -> ChaCha8Rng {
    let key = mix64(seed)
        ^ mix64((ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        ^ mix64((it as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    ChaCha8Rng::seed_from_u64(mix64(key))
}

/// Uniform on the open interval (0, 1): `(k + 1/2) / 2^53`. Never returns an
/// endpoint, so logarithms and side thresholds stay finite.
pub fn uniform_open01<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard exponential via inversion of `uniform_open01`.
pub fn exp1<R: RngCore>(rng: &mut R) -> f64 {
    -uniform_open01(rng).ln()
}
