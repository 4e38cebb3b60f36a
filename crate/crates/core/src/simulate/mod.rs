//! Seeded Monte Carlo generation of time-tagged detection streams.
//!
//! Two generators coexist. [`simulate_emission`] integrates the conditional
//! (no-jump) evolution of the driven two-level system and produces physical
//! photon emission times; its intensity correlation follows from the
//! dynamics alone. [`sample_hom_coincidences`] is a phenomenological pair
//! sampler whose coincidence histogram is shaped by the closed-form HOM
//! correlation; it exercises the analysis chain and certifies nothing about
//! the physics.

mod detector;
mod fibre;
mod hom_sampler;
pub mod io;
mod routing;
mod stream;
mod trajectory;

pub use detector::{apply_detector, DetectorConfig};
pub use fibre::{apply_fibre, FibreConfig};
pub use hom_sampler::{sample_hom_coincidences, PairSamplerConfig};
pub use routing::route_hbt;
pub use stream::{StreamMetadata, TimeTagStream};
pub use trajectory::{simulate_emission, Emissions, WaitingTimeDistribution};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Channel ids used by the generators.
pub const CHANNEL_A: u8 = 1;
pub const CHANNEL_B: u8 = 2;

/// Independent sub-seed for a labelled stage (splitmix64 finaliser).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed
        .wrapping_add(label.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
