//! Locating process noise in Wiener-Hammerstein systems.
//!
//! A Wiener-Hammerstein system `u -> R(q) -> f(.) -> S(q) -> y` is excited
//! with a periodic multisine whose RMS envelope varies within the period.
//! Averaging the per-sample output variance across periods and experiments
//! shows whether the internal process noise enters before the static
//! nonlinearity (the variance tracks the envelope) or after it (the variance
//! stays flat).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below name the common instantiations.
//!
//! Module map:
//! * [`lti`]: rational filters for the linear blocks and noise shaping.
//! * [`nonlinearity`]: polynomial, saturation and dead-zone blocks.
//! * [`excitation`]: random-phase multisines with a designed envelope.
//! * [`simulator`]: case I / case II simulation, SNR calibration, campaigns.
//! * [`detector`]: variance profile, location verdict, signature.

pub mod detector;
pub mod excitation;
pub mod lti;
pub mod nonlinearity;
pub mod presets;
pub mod scalar;
pub mod seed;
pub mod simulator;

pub use detector::{
    analyze_profile, bin_profile, classify_signature, decide_location, detect,
    envelope_from_inputs, experiment_variance, variance_profile, Bins, DetectError,
    DetectionReport, DetectorConfig, LocationDecision, LocationThresholds, Signature,
    SignatureFeatures, SignatureThresholds, VarianceProfile, Verdict,
};
pub use excitation::{
    default_segments, default_trapezoid_envelope, design_nonstationary_multisine,
    envelope_error, instantaneous_rms, random_phase_multisine, unit_power_trapezoid,
    DesignOptions, DesignOutcome, EnvelopeShape, EnvelopeTarget, ExcitationError, ExcitedGrid,
    MultisineSignal,
};
pub use lti::{FilterError, FilterState, TransferFunction};
pub use nonlinearity::{NonlinearityError, StaticNonlinearity};
pub use scalar::{pearson, DftPlan, Scalar};
pub use simulator::{
    calibrate_noise_gain, ep_oracle_case1, ep_oracle_for, impulse_energy, run_campaign, simulate,
    simulate_case1, simulate_case2, Calibration, Campaign, CampaignPlan, CampaignRecord,
    ExperimentRecord, NoiseLocation, NoiseModel, NoiseSeeds, Response, SignalNode, SimError,
    WhSystem,
};

pub type TransferFunctionF64 = TransferFunction<f64>;
pub type TransferFunctionF32 = TransferFunction<f32>;
pub type StaticNonlinearityF64 = StaticNonlinearity<f64>;
pub type StaticNonlinearityF32 = StaticNonlinearity<f32>;
pub type EnvelopeTargetF64 = EnvelopeTarget<f64>;
pub type EnvelopeTargetF32 = EnvelopeTarget<f32>;
pub type MultisineSignalF64 = MultisineSignal<f64>;
pub type MultisineSignalF32 = MultisineSignal<f32>;
pub type WhSystemF64 = WhSystem<f64>;
pub type WhSystemF32 = WhSystem<f32>;
pub type CampaignRecordF64 = CampaignRecord<f64>;
pub type CampaignRecordF32 = CampaignRecord<f32>;
pub type VarianceProfileF64 = VarianceProfile<f64>;
pub type DetectionReportF64 = DetectionReport<f64>;
