//! Reproducible random substreams.
//!
//! Every random draw of a campaign comes from a ChaCha8 stream selected by
//! `(master seed, purpose, array size)` for the key and the iteration index
//! for the stream id, so any iteration can be regenerated on its own and
//! the outcome never depends on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::registry::Geometry;

/// Identification written into report headers.
pub const PRNG_ID: &str =
    "ChaCha8Rng (rand_chacha 0.9), key = splitmix64(seed, purpose, rows, cols), stream = iteration";
pub const NORMAL_ID: &str = "rand_distr 0.5 StandardNormal (ziggurat)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Calibration = 1,
    Stimulus = 2,
    Fault = 3,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn substream(master_seed: u64, purpose: Purpose, geometry: Geometry, index: u64) -> ChaCha8Rng {
    let mut key = splitmix64(master_seed);
    for word in [purpose as u64, geometry.rows as u64, geometry.cols as u64] {
        key = splitmix64(key ^ word);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
