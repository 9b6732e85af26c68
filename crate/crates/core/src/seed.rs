//! Reproducible seed derivation for campaigns.
//!
//! Every random stream in a campaign is seeded by
//! `mix(base_seed ^ mix((experiment << 8) | stream))`, where `mix` is the
//! SplitMix64 finalizer. Streams are therefore independent of how
//! experiments are scheduled across threads.

/// Independent random streams within one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Stream {
    Phases = 1,
    ProcessNoise = 2,
    MeasurementNoise = 3,
    InputNoise = 4,
    Calibration = 5,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base_seed: u64, experiment: usize, stream: Stream) -> u64 {
    let tag = ((experiment as u64) << 8) | stream as u64;
    splitmix64(base_seed ^ splitmix64(tag))
}
