//! Seeded random substreams.
//!
//! Every component draws from its own ChaCha stream keyed by the run seed and
//! a stream name, so adding draws in one component never shifts another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// FNV-1a, used only to turn a stream name into a ChaCha stream id.
fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Returns the substream `name` of the run seeded with `seed`.
pub fn substream(seed: u64, name: &str) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// Stream names used by the engine.
pub mod streams {
    pub const SENSING: &str = "sensing";
    pub const NEGOTIATION: &str = "negotiation";
    pub const SESSION: &str = "session";
    pub const SU_TRAFFIC: &str = "su-traffic";

    pub fn pu_traffic(pu: u32) -> String {
        format!("pu-traffic/{pu}")
    }
}
