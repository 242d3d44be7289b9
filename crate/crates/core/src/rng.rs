//! Counter-based seed derivation.
//!
//! Every unit of random work gets its own generator, seeded by hashing the
//! master seed with the unit's coordinates. Results therefore do not depend
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used by one simulated batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    /// Coding coefficients (the Φ matrices).
    Coding = 1,
    /// Packet erasures (the D matrices).
    Loss = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with an ordered list of coordinates.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Generator for batch `batch` of trial `trial` on the given substream.
pub fn batch_rng(master: u64, trial: u64, batch: u64, stream: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(master, &[trial, batch]));
    rng.set_stream(stream as u64);
    rng
}
