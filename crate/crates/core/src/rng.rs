//! Seeded random streams.
//!
//! Every Monte-Carlo run owns a seed; the trajectory simulator and the
//! filter draw from separate ChaCha streams of that seed so that swapping
//! the filter never perturbs the simulated data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used to simulate ground truth and observations.
pub const SIMULATION_STREAM: u64 = 0;
/// Stream used by filters that sample (particle filters).
pub const FILTER_STREAM: u64 = 1;
/// Stream used for data draws of the weight-space task.
pub const DATA_STREAM: u64 = 2;
/// Stream used for network initialization.
pub const INIT_STREAM: u64 = 3;

pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
