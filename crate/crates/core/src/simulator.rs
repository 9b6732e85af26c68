//! Wiener-Hammerstein simulation with process noise before or after the
//! static nonlinearity.
//!
//! ```text
//!            e_x (case I)         e_x (case II)          e_y
//!               |                     |                   |
//!  u --> R --> (+) --> f --> ........(+) --> S --> y0 --> (+) --> y
//! ```
//!
//! Noise streams are filtered white Gaussian sequences that run continuously
//! across periods. A campaign designs one multisine period per experiment,
//! simulates one warmup period plus `P` recorded periods and keeps the
//! recorded ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::excitation::{
    design_nonstationary_multisine, DesignOptions, EnvelopeTarget, ExcitationError, ExcitedGrid,
    MultisineSignal,
};
use crate::lti::{FilterError, FilterState, TransferFunction};
use crate::nonlinearity::StaticNonlinearity;
use crate::scalar::{variance, Scalar};
use crate::seed::{derive_seed, Stream};

/// Periods simulated and dropped before recording.
pub const WARMUP_PERIODS: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("system has process noise location {found:?}, operation needs {expected}")]
    WrongLocation {
        expected: &'static str,
        found: NoiseLocation,
    },
    #[error("non-finite sample at period {period}, index {index}")]
    NonFiniteSample { period: usize, index: usize },
    #[error("reference signal has zero variance")]
    ZeroReferenceVariance,
    #[error("signal-to-noise ratio must be finite")]
    NonFiniteSnr,
    #[error("the e_p expansion needs a polynomial nonlinearity")]
    NonPolynomial,
    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {min} periods, got {found}")]
    TooFewPeriods { min: usize, found: usize },
    #[error("need at least one experiment")]
    NoExperiments,
    #[error("record dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
}

/// Where the process noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseLocation {
    /// Case I: added to `x = R u` before `f`.
    Before,
    /// Case II: added to `f(x)` before `S`.
    After,
    /// No process noise.
    None,
}

/// Internal signal used as the SNR reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalNode {
    /// `x = R u`.
    X,
    /// `f(x)`.
    Nonlinearity,
    /// Noise-free output `y0`.
    Output,
}

/// Filtered white Gaussian noise `gain * H(q) w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<T> {
    filter: TransferFunction<T>,
    snr_db: Option<T>,
    reference: SignalNode,
    gain: T,
}

impl<T: Scalar> NoiseModel<T> {
    /// Level set later by calibration against `reference`.
    pub fn with_snr(
        filter: TransferFunction<T>,
        snr_db: T,
        reference: SignalNode,
    ) -> Result<Self, SimError> {
        if !snr_db.is_finite() {
            return Err(SimError::NonFiniteSnr);
        }
        Ok(Self {
            filter,
            snr_db: Some(snr_db),
            reference,
            gain: T::zero(),
        })
    }

    /// Fixed gain, no calibration.
    pub fn with_gain(filter: TransferFunction<T>, gain: T, reference: SignalNode) -> Self {
        Self {
            filter,
            snr_db: None,
            reference,
            gain,
        }
    }

    /// No noise at all.
    pub fn silent(reference: SignalNode) -> Self {
        Self::with_gain(TransferFunction::identity(), T::zero(), reference)
    }

    pub fn filter(&self) -> &TransferFunction<T> {
        &self.filter
    }

    pub fn snr_db(&self) -> Option<T> {
        self.snr_db
    }

    pub fn reference(&self) -> SignalNode {
        self.reference
    }

    pub fn gain(&self) -> T {
        self.gain
    }

    pub fn set_gain(&mut self, gain: T) {
        self.gain = gain;
    }

    /// `len` samples of this noise from a fresh stream.
    pub fn realize(&self, len: usize, seed: u64) -> Vec<T> {
        NoiseStream::new(self, seed).next_chunk(len)
    }

    /// Variance of `H(q) w(t)` for unit white `w`: the energy of the impulse
    /// response.
    pub fn unit_variance(&self) -> T {
        impulse_energy(&self.filter)
    }
}

/// Sum of squared impulse-response taps, run until the tail is negligible.
pub fn impulse_energy<T: Scalar>(tf: &TransferFunction<T>) -> T {
    const CHUNK: usize = 1024;
    const MAX_TAPS: usize = 1 << 22;
    let mut state = tf.new_state();
    let mut input = vec![T::zero(); CHUNK];
    input[0] = T::one();
    let mut energy = T::zero();
    let mut taps = 0;
    let mut out = Vec::with_capacity(CHUNK);
    loop {
        out.clear();
        tf.apply_into(&input, &mut state, &mut out)
            .expect("state sized by the filter");
        let chunk: T = out.iter().map(|&v| v * v).sum();
        energy = energy + chunk;
        taps += CHUNK;
        input[0] = T::zero();
        if taps >= MAX_TAPS || (taps > CHUNK && chunk <= energy * T::epsilon() * T::lit(1e-3)) {
            return energy;
        }
    }
}

struct NoiseStream<T> {
    filter: TransferFunction<T>,
    state: FilterState<T>,
    gain: T,
    rng: ChaCha8Rng,
}

impl<T: Scalar> NoiseStream<T> {
    fn new(model: &NoiseModel<T>, seed: u64) -> Self {
        Self {
            filter: model.filter.clone(),
            state: model.filter.new_state(),
            gain: model.gain,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn next_chunk(&mut self, len: usize) -> Vec<T> {
        if self.gain == T::zero() {
            return vec![T::zero(); len];
        }
        let white: Vec<T> = (0..len).map(|_| T::standard_normal(&mut self.rng)).collect();
        let mut out = self
            .filter
            .apply(&white, &mut self.state)
            .expect("state sized by the filter");
        out.iter_mut().for_each(|v| *v = *v * self.gain);
        out
    }
}

/// The block chain plus its noise sources.
#[derive(Debug, Clone, PartialEq)]
pub struct WhSystem<T> {
    pub r: TransferFunction<T>,
    pub s: TransferFunction<T>,
    pub f: StaticNonlinearity<T>,
    pub location: NoiseLocation,
    pub process: NoiseModel<T>,
    pub measurement: NoiseModel<T>,
    /// Standard deviation of white noise added to the recorded input only.
    pub input_noise_gain: T,
}

/// Signals at every node of one simulated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Response<T> {
    /// `R u`.
    pub x: Vec<T>,
    /// Output of `f` (with process noise at its input in case I).
    pub nonlinear: Vec<T>,
    /// `S` output, before measurement noise.
    pub noiseless_output: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> WhSystem<T> {
    pub fn new(
        r: TransferFunction<T>,
        s: TransferFunction<T>,
        f: StaticNonlinearity<T>,
        location: NoiseLocation,
        process: NoiseModel<T>,
        measurement: NoiseModel<T>,
    ) -> Self {
        Self {
            r,
            s,
            f,
            location,
            process,
            measurement,
            input_noise_gain: T::zero(),
        }
    }

    /// Simulate `u` with explicit noise sequences (missing ones are zero).
    /// Filters start from rest.
    pub fn respond(
        &self,
        u: &[T],
        process: Option<&[T]>,
        measurement: Option<&[T]>,
    ) -> Result<Response<T>, SimError> {
        let mut states = ChainState::new(self);
        self.respond_from(&mut states, u, process, measurement)
    }

    fn respond_from(
        &self,
        states: &mut ChainState<T>,
        u: &[T],
        process: Option<&[T]>,
        measurement: Option<&[T]>,
    ) -> Result<Response<T>, SimError> {
        for seq in [process, measurement].into_iter().flatten() {
            if seq.len() != u.len() {
                return Err(SimError::LengthMismatch {
                    left: u.len(),
                    right: seq.len(),
                });
            }
        }
        let x = self.r.apply(u, &mut states.r)?;
        let nonlinear: Vec<T> = match (self.location, process) {
            (NoiseLocation::Before, Some(e)) => x
                .iter()
                .zip(e)
                .map(|(&xv, &ev)| self.f.eval_sample(xv + ev))
                .collect(),
            _ => x.iter().map(|&xv| self.f.eval_sample(xv)).collect(),
        };
        let s_in: Vec<T> = match (self.location, process) {
            (NoiseLocation::After, Some(e)) => {
                nonlinear.iter().zip(e).map(|(&r, &ev)| r + ev).collect()
            }
            _ => nonlinear.clone(),
        };
        let noiseless_output = self.s.apply(&s_in, &mut states.s)?;
        let output = match measurement {
            Some(e) => noiseless_output
                .iter()
                .zip(e)
                .map(|(&y, &ev)| y + ev)
                .collect(),
            None => noiseless_output.clone(),
        };
        Ok(Response {
            x,
            nonlinear,
            noiseless_output,
            output,
        })
    }

    /// Copy with every SNR-specified noise gain calibrated against `u0`.
    pub fn calibrated(&self, u0: &[T]) -> Result<Self, SimError> {
        let mut sys = self.clone();
        if sys.location != NoiseLocation::None {
            if let Some(snr) = sys.process.snr_db {
                let g =
                    calibrate_noise_gain(self, u0, sys.process.reference, snr, &sys.process.filter)?;
                sys.process.gain = g;
            }
        }
        if let Some(snr) = sys.measurement.snr_db {
            let g = calibrate_noise_gain(
                self,
                u0,
                sys.measurement.reference,
                snr,
                &sys.measurement.filter,
            )?;
            sys.measurement.gain = g;
        }
        Ok(sys)
    }

    fn process_active(&self) -> bool {
        self.location != NoiseLocation::None && self.process.gain != T::zero()
    }
}

struct ChainState<T> {
    r: FilterState<T>,
    s: FilterState<T>,
}

impl<T: Scalar> ChainState<T> {
    fn new(sys: &WhSystem<T>) -> Self {
        Self {
            r: sys.r.new_state(),
            s: sys.s.new_state(),
        }
    }
}

/// Seeds of the noise streams of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSeeds {
    pub process: u64,
    pub measurement: u64,
    pub input: u64,
}

impl NoiseSeeds {
    pub fn derive(base_seed: u64, experiment: usize) -> Self {
        Self {
            process: derive_seed(base_seed, experiment, Stream::ProcessNoise),
            measurement: derive_seed(base_seed, experiment, Stream::MeasurementNoise),
            input: derive_seed(base_seed, experiment, Stream::InputNoise),
        }
    }
}

/// Simulate `WARMUP_PERIODS + periods` periods of `u0` and return the last
/// `periods`, one vector per period. Dispatches on the noise location.
pub fn simulate<T: Scalar>(
    sys: &WhSystem<T>,
    u0: &[T],
    periods: usize,
    seeds: NoiseSeeds,
) -> Result<Vec<Vec<T>>, SimError> {
    let n = u0.len();
    let mut states = ChainState::new(sys);
    let mut process = NoiseStream::new(&sys.process, seeds.process);
    let mut measurement = NoiseStream::new(&sys.measurement, seeds.measurement);
    let with_process = sys.process_active();
    let mut out = Vec::with_capacity(periods);
    for p in 0..WARMUP_PERIODS + periods {
        let ex = with_process.then(|| process.next_chunk(n));
        let ey = measurement.next_chunk(n);
        let resp = sys.respond_from(&mut states, u0, ex.as_deref(), Some(&ey))?;
        if p >= WARMUP_PERIODS {
            let rec = p - WARMUP_PERIODS;
            if let Some(index) = resp.output.iter().position(|v| !v.is_finite()) {
                return Err(SimError::NonFiniteSample { period: rec, index });
            }
            out.push(resp.output);
        }
    }
    Ok(out)
}

/// Case I: `y = S f(R u + e_x) + e_y`.
pub fn simulate_case1<T: Scalar>(
    sys: &WhSystem<T>,
    u0: &MultisineSignal<T>,
    periods: usize,
    seeds: NoiseSeeds,
) -> Result<Vec<Vec<T>>, SimError> {
    if sys.location != NoiseLocation::Before {
        return Err(SimError::WrongLocation {
            expected: "Before",
            found: sys.location,
        });
    }
    simulate(sys, u0.samples(), periods, seeds)
}

/// Case II: `y = S (f(R u) + e_x) + e_y`; also covers the noise-free-process
/// configuration.
pub fn simulate_case2<T: Scalar>(
    sys: &WhSystem<T>,
    u0: &MultisineSignal<T>,
    periods: usize,
    seeds: NoiseSeeds,
) -> Result<Vec<Vec<T>>, SimError> {
    if sys.location == NoiseLocation::Before {
        return Err(SimError::WrongLocation {
            expected: "After or None",
            found: sys.location,
        });
    }
    simulate(sys, u0.samples(), periods, seeds)
}

/// Output disturbance of case I from the binomial expansion of a polynomial
/// nonlinearity:
/// `e_p = sum_{i>=1} sum_{j<i} a_i C(i, j) S{ x^j e_x^(i-j) }` with
/// `x = R u`. Each term is filtered separately from rest.
pub fn ep_oracle_case1<T: Scalar>(
    r: &TransferFunction<T>,
    s: &TransferFunction<T>,
    coeffs: &[T],
    u: &[T],
    e_x: &[T],
) -> Result<Vec<T>, SimError> {
    if u.len() != e_x.len() {
        return Err(SimError::LengthMismatch {
            left: u.len(),
            right: e_x.len(),
        });
    }
    let x = r.filter(u);
    let mut ep = vec![T::zero(); u.len()];
    for (i, &a) in coeffs.iter().enumerate().skip(1) {
        for j in 0..i {
            let c = a * T::lit(binomial(i, j) as f64);
            let term: Vec<T> = x
                .iter()
                .zip(e_x)
                .map(|(&xv, &ev)| c * xv.powi(j as i32) * ev.powi((i - j) as i32))
                .collect();
            for (acc, v) in ep.iter_mut().zip(s.filter(&term)) {
                *acc = *acc + v;
            }
        }
    }
    Ok(ep)
}

/// [`ep_oracle_case1`] taking the nonlinearity itself.
pub fn ep_oracle_for<T: Scalar>(
    sys: &WhSystem<T>,
    u: &[T],
    e_x: &[T],
) -> Result<Vec<T>, SimError> {
    let coeffs = sys.f.polynomial_coefficients().ok_or(SimError::NonPolynomial)?;
    ep_oracle_case1(&sys.r, &sys.s, coeffs, u, e_x)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

/// Gain that puts `filter`-shaped noise `snr_db` below the variance of
/// `node` in the noise-free steady-state response to one period `u0`.
///
/// The reference variance is taken over the second of two simulated
/// periods; the unit noise variance is the impulse-response energy of
/// `filter`.
pub fn calibrate_noise_gain<T: Scalar>(
    sys: &WhSystem<T>,
    u0: &[T],
    node: SignalNode,
    snr_db: T,
    filter: &TransferFunction<T>,
) -> Result<T, SimError> {
    if !snr_db.is_finite() {
        return Err(SimError::NonFiniteSnr);
    }
    let n = u0.len();
    let mut twice = u0.to_vec();
    twice.extend_from_slice(u0);
    let resp = sys.respond(&twice, None, None)?;
    let signal = match node {
        SignalNode::X => &resp.x,
        SignalNode::Nonlinearity => &resp.nonlinear,
        SignalNode::Output => &resp.noiseless_output,
    };
    let var_ref = variance(&signal[n..]);
    if var_ref.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(SimError::ZeroReferenceVariance);
    }
    let var_noise = impulse_energy(filter);
    let ratio = T::lit(10.0).powf(snr_db / T::lit(10.0));
    Ok((var_ref / (var_noise * ratio)).sqrt())
}

/// Output periods and input of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord<T> {
    /// Recorded input period.
    pub input: Vec<T>,
    /// `P` output periods, each of length `N`.
    pub periods: Vec<Vec<T>>,
    /// Phase seed of the designed input, when known.
    pub seed: Option<u64>,
}

/// `M` experiments of `P` periods of `N` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRecord<T> {
    n: usize,
    p: usize,
    sampling_rate_hz: f64,
    experiments: Vec<ExperimentRecord<T>>,
    calibration: Option<Calibration<T>>,
}

/// Noise gains a simulated campaign ran with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration<T> {
    pub process_gain: T,
    pub measurement_gain: T,
}

impl<T: Scalar> CampaignRecord<T> {
    /// Validates shapes and finiteness.
    pub fn new(
        n: usize,
        p: usize,
        sampling_rate_hz: f64,
        experiments: Vec<ExperimentRecord<T>>,
    ) -> Result<Self, SimError> {
        if experiments.is_empty() {
            return Err(SimError::NoExperiments);
        }
        for (m, exp) in experiments.iter().enumerate() {
            if exp.input.len() != n {
                return Err(SimError::DimensionMismatch(format!(
                    "experiment {m}: input has {} samples, expected {n}",
                    exp.input.len()
                )));
            }
            if exp.periods.len() != p {
                return Err(SimError::DimensionMismatch(format!(
                    "experiment {m}: {} periods, expected {p}",
                    exp.periods.len()
                )));
            }
            for (k, period) in exp.periods.iter().enumerate() {
                if period.len() != n {
                    return Err(SimError::DimensionMismatch(format!(
                        "experiment {m}, period {k}: {} samples, expected {n}",
                        period.len()
                    )));
                }
                if let Some(index) = period.iter().position(|v| !v.is_finite()) {
                    return Err(SimError::NonFiniteSample { period: k, index });
                }
            }
        }
        Ok(Self {
            n,
            p,
            sampling_rate_hz,
            experiments,
            calibration: None,
        })
    }

    pub fn with_calibration(mut self, calibration: Calibration<T>) -> Self {
        self.calibration = Some(calibration);
        self
    }

    pub fn period_len(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.p
    }

    pub fn experiment_count(&self) -> usize {
        self.experiments.len()
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn experiments(&self) -> &[ExperimentRecord<T>] {
        &self.experiments
    }

    pub fn calibration(&self) -> Option<&Calibration<T>> {
        self.calibration.as_ref()
    }

    pub fn into_experiments(self) -> Vec<ExperimentRecord<T>> {
        self.experiments
    }
}

/// Campaign dimensions and excitation.
#[derive(Debug, Clone)]
pub struct CampaignPlan<T> {
    pub target: EnvelopeTarget<T>,
    pub grid: ExcitedGrid,
    pub amplitude: T,
    pub experiments: usize,
    pub periods: usize,
    pub base_seed: u64,
    pub sampling_rate_hz: f64,
    pub design: DesignOptions,
}

impl<T: Scalar> CampaignPlan<T> {
    pub fn period_len(&self) -> usize {
        self.grid.period()
    }

    /// Designed input period of experiment `m`.
    pub fn design_input(&self, m: usize) -> Result<MultisineSignal<T>, SimError> {
        let seed = derive_seed(self.base_seed, m, Stream::Phases);
        Ok(
            design_nonstationary_multisine(&self.target, &self.grid, self.amplitude, seed, &self.design)?
                .signal,
        )
    }
}

/// Runs experiments independently and in parallel; results do not depend on
/// scheduling.
pub struct Campaign<T> {
    system: WhSystem<T>,
    plan: CampaignPlan<T>,
    calibration: Calibration<T>,
}

impl<T: Scalar> Campaign<T> {
    /// Calibrates noise levels once, on the input of experiment 0, so every
    /// experiment sees the same noise gains.
    pub fn new(system: &WhSystem<T>, plan: CampaignPlan<T>) -> Result<Self, SimError> {
        if plan.experiments == 0 {
            return Err(SimError::NoExperiments);
        }
        if plan.periods < 2 {
            return Err(SimError::TooFewPeriods {
                min: 2,
                found: plan.periods,
            });
        }
        let first = plan.design_input(0)?;
        let system = system.calibrated(first.samples())?;
        let calibration = Calibration {
            process_gain: if system.location == NoiseLocation::None {
                T::zero()
            } else {
                system.process.gain
            },
            measurement_gain: system.measurement.gain,
        };
        Ok(Self {
            system,
            plan,
            calibration,
        })
    }

    pub fn system(&self) -> &WhSystem<T> {
        &self.system
    }

    pub fn plan(&self) -> &CampaignPlan<T> {
        &self.plan
    }

    pub fn calibration(&self) -> Calibration<T> {
        self.calibration
    }

    /// Simulate experiment `m`.
    pub fn experiment(&self, m: usize) -> Result<ExperimentRecord<T>, SimError> {
        let input = self.plan.design_input(m)?;
        let seeds = NoiseSeeds::derive(self.plan.base_seed, m);
        let periods = simulate(&self.system, input.samples(), self.plan.periods, seeds)?;
        let mut recorded = input.samples().to_vec();
        if self.system.input_noise_gain != T::zero() {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds.input);
            for v in recorded.iter_mut() {
                *v = *v + self.system.input_noise_gain * T::standard_normal(&mut rng);
            }
        }
        Ok(ExperimentRecord {
            input: recorded,
            periods,
            seed: Some(input.seed()),
        })
    }

    /// Every experiment, in index order.
    pub fn run(&self) -> Result<CampaignRecord<T>, SimError> {
        let experiments = (0..self.plan.experiments)
            .into_par_iter()
            .map(|m| self.experiment(m))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CampaignRecord::new(
            self.plan.period_len(),
            self.plan.periods,
            self.plan.sampling_rate_hz,
            experiments,
        )?
        .with_calibration(self.calibration))
    }
}

/// Design, calibrate and simulate a full campaign.
pub fn run_campaign<T: Scalar>(
    sys: &WhSystem<T>,
    plan: CampaignPlan<T>,
) -> Result<CampaignRecord<T>, SimError> {
    Campaign::new(sys, plan)?.run()
}
