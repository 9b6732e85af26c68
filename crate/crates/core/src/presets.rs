//! Reference plant, nonlinearities and noise shaping used throughout the
//! examples and tests.

use crate::lti::TransferFunction;
use crate::nonlinearity::StaticNonlinearity;
use crate::scalar::Scalar;
use crate::simulator::{NoiseLocation, NoiseModel, SignalNode, WhSystem};

pub const SAMPLING_RATE_HZ: f64 = 78_125.0;
pub const PERIOD_LEN: usize = 16_384;
pub const EXPERIMENTS: usize = 100;
pub const PERIODS: usize = 100;

/// Process-noise SNR when noise precedes the nonlinearity (reference `x`).
pub const BEFORE_PROCESS_SNR_DB: f64 = 26.0;
/// Measurement SNR in the same setup (reference `y0`).
pub const BEFORE_MEASUREMENT_SNR_DB: f64 = 20.0;
/// Process-noise SNR when noise follows the nonlinearity (reference `f(x)`).
pub const AFTER_PROCESS_SNR_DB: f64 = 20.0;
pub const AFTER_MEASUREMENT_SNR_DB: f64 = 26.0;

pub const R_NUM: [f64; 3] = [0.1, 0.2, -0.3];
pub const R_DEN: [f64; 3] = [0.95, -1.4, 0.9];
pub const S_NUM: [f64; 3] = [0.0, 1.0, 0.5];
pub const S_DEN: [f64; 3] = [0.95, -0.9, 0.9];
pub const PROCESS_NUM: [f64; 2] = [1.0, 1.8];
pub const PROCESS_DEN: [f64; 3] = [1.0, -1.4, 0.9];
pub const MEASUREMENT_NUM: [f64; 3] = [1.0, 2.0, 5.0];
pub const MEASUREMENT_DEN: [f64; 3] = [1.0, -0.94, 0.88];

pub const POLYNOMIAL: [f64; 4] = [0.0, 0.01, 0.02, -0.008];
pub const SATURATION: (f64, f64) = (-3.0, 3.0);
pub const DEAD_ZONE: (f64, f64) = (-1.0, 1.0);

fn tf<T: Scalar>(num: &[f64], den: &[f64]) -> TransferFunction<T> {
    TransferFunction::new(
        num.iter().map(|&v| T::lit(v)).collect(),
        den.iter().map(|&v| T::lit(v)).collect(),
    )
    .expect("reference filters are stable")
}

pub fn reference_r<T: Scalar>() -> TransferFunction<T> {
    tf(&R_NUM, &R_DEN)
}

pub fn reference_s<T: Scalar>() -> TransferFunction<T> {
    tf(&S_NUM, &S_DEN)
}

pub fn process_noise_filter<T: Scalar>() -> TransferFunction<T> {
    tf(&PROCESS_NUM, &PROCESS_DEN)
}

pub fn measurement_noise_filter<T: Scalar>() -> TransferFunction<T> {
    tf(&MEASUREMENT_NUM, &MEASUREMENT_DEN)
}

pub fn reference_polynomial<T: Scalar>() -> StaticNonlinearity<T> {
    StaticNonlinearity::Polynomial(POLYNOMIAL.iter().map(|&v| T::lit(v)).collect())
}

pub fn reference_saturation<T: Scalar>() -> StaticNonlinearity<T> {
    StaticNonlinearity::Saturation {
        lo: T::lit(SATURATION.0),
        hi: T::lit(SATURATION.1),
    }
}

pub fn reference_dead_zone<T: Scalar>() -> StaticNonlinearity<T> {
    StaticNonlinearity::DeadZone {
        lo: T::lit(DEAD_ZONE.0),
        hi: T::lit(DEAD_ZONE.1),
    }
}

/// Default SNRs `(process, measurement)` for a noise location.
pub fn default_snrs_db(location: NoiseLocation) -> (f64, f64) {
    match location {
        NoiseLocation::Before => (BEFORE_PROCESS_SNR_DB, BEFORE_MEASUREMENT_SNR_DB),
        NoiseLocation::After | NoiseLocation::None => {
            (AFTER_PROCESS_SNR_DB, AFTER_MEASUREMENT_SNR_DB)
        }
    }
}

/// Reference node of the process-noise SNR for a location.
pub fn default_process_reference(location: NoiseLocation) -> SignalNode {
    match location {
        NoiseLocation::Before => SignalNode::X,
        NoiseLocation::After | NoiseLocation::None => SignalNode::Nonlinearity,
    }
}

/// Reference plant with SNR-specified noise models for `location`; gains are
/// filled in by calibration.
pub fn reference_system<T: Scalar>(f: StaticNonlinearity<T>, location: NoiseLocation) -> WhSystem<T> {
    let (process_snr, measurement_snr) = default_snrs_db(location);
    let process = if location == NoiseLocation::None {
        NoiseModel::silent(SignalNode::Nonlinearity)
    } else {
        NoiseModel::with_snr(
            process_noise_filter(),
            T::lit(process_snr),
            default_process_reference(location),
        )
        .expect("finite SNR")
    };
    let measurement = NoiseModel::with_snr(
        measurement_noise_filter(),
        T::lit(measurement_snr),
        SignalNode::Output,
    )
    .expect("finite SNR");
    WhSystem::new(reference_r(), reference_s(), f, location, process, measurement)
}
