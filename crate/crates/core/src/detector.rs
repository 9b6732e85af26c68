//! Time-resolved output-disturbance variance and the decisions drawn from it.
//!
//! For each experiment the sample variance across periods is computed at
//! every time index, then averaged over experiments. Process noise ahead of
//! the nonlinearity makes this profile follow the input envelope; noise after
//! it (or none) leaves it flat. The shape within the period additionally
//! hints at the kind of nonlinearity.
//!
//! The location rule and the signature rule are quantitative stand-ins for a
//! visual judgement; both are heuristics and every score they use is
//! reported.

use serde::Serialize;
use thiserror::Error;

use crate::excitation::{instantaneous_rms, EnvelopeTarget, ExcitationError};
use crate::scalar::{mean, pearson, Scalar};
use crate::simulator::CampaignRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("need at least 2 periods per experiment, got {found}")]
    TooFewPeriods { found: usize },
    #[error("bin count {bins} outside 4..={max}")]
    BadBinCount { bins: usize, max: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no experiments")]
    Empty,
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
}

/// Per-sample variance of the output disturbance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceProfile<T> {
    /// Average over experiments, one value per sample of the period.
    pub sigma2: Vec<T>,
    /// One profile per experiment.
    pub per_experiment: Vec<Vec<T>>,
    /// Degrees of freedom behind each entry of `sigma2`: `M (P - 1)`.
    pub dof: usize,
}

impl<T: Scalar> VarianceProfile<T> {
    /// Average already computed per-experiment profiles.
    pub fn from_experiments(per_experiment: Vec<Vec<T>>, periods: usize) -> Result<Self, DetectError> {
        let first = per_experiment.first().ok_or(DetectError::Empty)?;
        let n = first.len();
        let mut sigma2 = vec![T::zero(); n];
        for prof in &per_experiment {
            if prof.len() != n {
                return Err(DetectError::LengthMismatch {
                    left: n,
                    right: prof.len(),
                });
            }
            for (acc, &v) in sigma2.iter_mut().zip(prof) {
                *acc = *acc + v;
            }
        }
        let m = T::from_usize_lossy(per_experiment.len());
        sigma2.iter_mut().for_each(|v| *v = *v / m);
        Ok(Self {
            dof: per_experiment.len() * periods.saturating_sub(1),
            sigma2,
            per_experiment,
        })
    }

    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    /// Time average of `sigma2`.
    pub fn mean(&self) -> T {
        mean(&self.sigma2)
    }
}

/// Unbiased variance across periods at every sample index.
pub fn experiment_variance<T: Scalar>(periods: &[Vec<T>]) -> Result<Vec<T>, DetectError> {
    let p = periods.len();
    if p < 2 {
        return Err(DetectError::TooFewPeriods { found: p });
    }
    let n = periods[0].len();
    if let Some(bad) = periods.iter().find(|q| q.len() != n) {
        return Err(DetectError::LengthMismatch {
            left: n,
            right: bad.len(),
        });
    }
    // Shifted by the first period: identical periods give exactly zero.
    let pf = T::from_usize_lossy(p);
    let origin = &periods[0];
    let mut sum = vec![T::zero(); n];
    let mut sum_sq = vec![T::zero(); n];
    for period in &periods[1..] {
        for t in 0..n {
            let d = period[t] - origin[t];
            sum[t] = sum[t] + d;
            sum_sq[t] = sum_sq[t] + d * d;
        }
    }
    let denom = T::from_usize_lossy(p - 1);
    let var = sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &ss)| ((ss - s * s / pf) / denom).max(T::zero()))
        .collect();
    Ok(var)
}

/// Variance profile of a whole campaign.
pub fn variance_profile<T: Scalar>(record: &CampaignRecord<T>) -> Result<VarianceProfile<T>, DetectError> {
    if record.periods() < 2 {
        return Err(DetectError::TooFewPeriods {
            found: record.periods(),
        });
    }
    let per_experiment = record
        .experiments()
        .iter()
        .map(|e| experiment_variance(&e.periods))
        .collect::<Result<Vec<_>, _>>()?;
    VarianceProfile::from_experiments(per_experiment, record.periods())
}

/// Envelope estimated from recorded input periods: root of the mean squared
/// instantaneous RMS across experiments.
pub fn envelope_from_inputs<T: Scalar>(
    inputs: &[&[T]],
    segments: usize,
) -> Result<EnvelopeTarget<T>, DetectError> {
    let first = inputs.first().ok_or(DetectError::Empty)?;
    let n = first.len();
    let mut acc = vec![T::zero(); n];
    for u in inputs {
        if u.len() != n {
            return Err(DetectError::LengthMismatch {
                left: n,
                right: u.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(instantaneous_rms(u, segments)?) {
            *a = *a + v * v;
        }
    }
    let m = T::from_usize_lossy(inputs.len());
    Ok(EnvelopeTarget::custom(acc.into_iter().map(|v| (v / m).sqrt()).collect())?)
}

/// Equal-width time bins of the variance profile and the squared envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bins<T> {
    /// First sample index of every bin; bin `b` ends where `b + 1` starts.
    pub starts: Vec<usize>,
    pub variance: Vec<T>,
    pub envelope_sq: Vec<T>,
}

impl<T> Bins<T> {
    pub fn len(&self) -> usize {
        self.variance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variance.is_empty()
    }
}

/// Mean of `sigma2` and of `envelope^2` over `count` contiguous bins.
pub fn bin_profile<T: Scalar>(
    sigma2: &[T],
    envelope: &EnvelopeTarget<T>,
    count: usize,
) -> Result<Bins<T>, DetectError> {
    let n = sigma2.len();
    if envelope.len() != n {
        return Err(DetectError::LengthMismatch {
            left: n,
            right: envelope.len(),
        });
    }
    let max = n / 16;
    if count < 4 || count > max {
        return Err(DetectError::BadBinCount { bins: count, max });
    }
    let env_sq = envelope.squared();
    let starts: Vec<usize> = (0..count).map(|b| b * n / count).collect();
    let mut variance = Vec::with_capacity(count);
    let mut envelope_sq = Vec::with_capacity(count);
    for b in 0..count {
        let (lo, hi) = (starts[b], if b + 1 == count { n } else { starts[b + 1] });
        variance.push(mean(&sigma2[lo..hi]));
        envelope_sq.push(mean(&env_sq[lo..hi]));
    }
    Ok(Bins {
        starts,
        variance,
        envelope_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "ProcessNoiseBeforeNL")]
    Before,
    #[serde(rename = "ProcessNoiseAfterNLorAbsent")]
    AfterOrAbsent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocationThresholds {
    pub rho_min: f64,
    pub ratio_min: f64,
}

impl Default for LocationThresholds {
    fn default() -> Self {
        Self {
            rho_min: 0.5,
            ratio_min: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocationDecision<T> {
    pub verdict: Verdict,
    /// Pearson correlation of binned variance with binned envelope squared;
    /// `None` when either has no spread.
    pub rho: Option<T>,
    /// Largest over smallest binned variance.
    pub ratio: T,
}

/// `Before` iff `|rho| >= rho_min` or `ratio >= ratio_min`.
///
/// The absolute correlation is used because saturation pulls the variance
/// down where the envelope peaks.
pub fn decide_location<T: Scalar>(bins: &Bins<T>, thresholds: &LocationThresholds) -> LocationDecision<T> {
    let rho = pearson(&bins.variance, &bins.envelope_sq);
    let ratio = spread_ratio(&bins.variance);
    let by_rho = rho.is_some_and(|r| r.abs() >= T::lit(thresholds.rho_min));
    let by_ratio = ratio >= T::lit(thresholds.ratio_min);
    LocationDecision {
        verdict: if by_rho || by_ratio {
            Verdict::Before
        } else {
            Verdict::AfterOrAbsent
        },
        rho,
        ratio,
    }
}

fn spread_ratio<T: Scalar>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let min = v.iter().copied().fold(T::infinity(), T::min);
    if max == min {
        T::one()
    } else if min <= T::zero() {
        T::infinity()
    } else {
        max / min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Signature {
    SaturationLike,
    DeadZoneLike,
    SmoothLike,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignatureThresholds {
    /// Fraction of bins, lowest envelope first, treated as period edges.
    pub plateau_frac: f64,
    /// Edge bins may exceed the variance floor by at most this factor for a
    /// dead-zone plateau.
    pub floor_tol: f64,
    /// Saturation when the peak-bin mean is at most this fraction of the
    /// mean over the other bins.
    pub peak_dip: f64,
    /// Dead-zone when the excess variance (over the floor) of the shoulder
    /// bins is at least this fraction of that of the peak bins.
    pub shoulder_min: f64,
}

impl Default for SignatureThresholds {
    fn default() -> Self {
        Self {
            plateau_frac: 0.15,
            floor_tol: 1.25,
            peak_dip: 0.95,
            shoulder_min: 0.6,
        }
    }
}

/// Shape scores behind a signature call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignatureFeatures<T> {
    /// Mean variance over peak bins divided by the mean over the rest.
    pub peak_dip: T,
    /// Mean variance over edge bins divided by the smallest bin variance.
    pub edge_to_floor: T,
    /// Excess over the floor, shoulder bins relative to peak bins.
    pub shoulder_to_peak: T,
    /// Whether the peak quartile has the highest mean variance of the four
    /// envelope quartiles.
    pub peak_is_max: bool,
}

/// Bin groups by envelope rank: peak = top quarter, shoulder = the quarter
/// below it, edge = lowest `plateau_frac`.
struct Groups {
    peak: Vec<usize>,
    shoulder: Vec<usize>,
    edge: Vec<usize>,
    quartiles: [Vec<usize>; 4],
}

fn group_bins<T: Scalar>(envelope_sq: &[T], plateau_frac: f64) -> Groups {
    let b = envelope_sq.len();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| {
        envelope_sq[i]
            .partial_cmp(&envelope_sq[j])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let quarter = (b / 4).max(1);
    let edge_count = ((plateau_frac * b as f64).round() as usize).clamp(1, b);
    let quartiles = [
        order[..quarter].to_vec(),
        order[quarter..b / 2].to_vec(),
        order[b / 2..b - quarter].to_vec(),
        order[b - quarter..].to_vec(),
    ];
    Groups {
        peak: quartiles[3].clone(),
        shoulder: quartiles[2].clone(),
        edge: order[..edge_count].to_vec(),
        quartiles,
    }
}

fn group_mean<T: Scalar>(v: &[T], idx: &[usize]) -> T {
    if idx.is_empty() {
        return T::zero();
    }
    idx.iter().map(|&i| v[i]).sum::<T>() / T::from_usize_lossy(idx.len())
}

pub fn signature_features<T: Scalar>(bins: &Bins<T>, thresholds: &SignatureThresholds) -> SignatureFeatures<T> {
    let v = &bins.variance;
    let g = group_bins(&bins.envelope_sq, thresholds.plateau_frac);
    let rest: Vec<usize> = (0..v.len()).filter(|i| !g.peak.contains(i)).collect();
    let floor = v.iter().copied().fold(T::infinity(), T::min);
    let peak_mean = group_mean(v, &g.peak);
    let rest_mean = group_mean(v, &rest);
    let peak_excess = peak_mean - floor;
    let shoulder_excess = group_mean(v, &g.shoulder) - floor;
    let ratio = |num: T, den: T| if den > T::zero() { num / den } else { T::zero() };
    let peak_is_max = g.quartiles[..3]
        .iter()
        .filter(|q| !q.is_empty())
        .all(|q| peak_mean >= group_mean(v, q));
    SignatureFeatures {
        peak_dip: ratio(peak_mean, rest_mean),
        edge_to_floor: if floor > T::zero() {
            group_mean(v, &g.edge) / floor
        } else {
            T::infinity()
        },
        shoulder_to_peak: ratio(shoulder_excess, peak_excess),
        peak_is_max,
    }
}

/// Shape of the variance profile within the period, only meaningful when
/// process noise precedes the nonlinearity.
///
/// * `SaturationLike`: variance dips where the envelope peaks.
/// * `DeadZoneLike`: edges sit on the noise floor, the peak quartile carries
///   the most variance, and the rise saturates early (the shoulder already
///   has most of the peak excess).
/// * `SmoothLike`: anything else, typically a gradual envelope-following
///   rise.
pub fn classify_signature<T: Scalar>(
    bins: &Bins<T>,
    verdict: Verdict,
    thresholds: &SignatureThresholds,
) -> (Signature, Option<SignatureFeatures<T>>) {
    if verdict != Verdict::Before {
        return (Signature::NotApplicable, None);
    }
    let f = signature_features(bins, thresholds);
    let sig = if f.peak_dip <= T::lit(thresholds.peak_dip) {
        Signature::SaturationLike
    } else if f.edge_to_floor <= T::lit(thresholds.floor_tol)
        && f.peak_is_max
        && f.shoulder_to_peak >= T::lit(thresholds.shoulder_min)
    {
        Signature::DeadZoneLike
    } else {
        Signature::SmoothLike
    };
    (sig, Some(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub bins: usize,
    pub location: LocationThresholds,
    pub signature: SignatureThresholds,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            location: LocationThresholds::default(),
            signature: SignatureThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport<T> {
    pub verdict: Verdict,
    pub rho: Option<T>,
    pub ratio: T,
    pub signature: Signature,
    pub features: Option<SignatureFeatures<T>>,
    /// Time average of the variance profile.
    pub mean_sigma2: T,
    pub dof: usize,
    pub bins: Bins<T>,
    pub thresholds: DetectorConfig,
    /// Both decision rules are heuristic.
    pub heuristic: bool,
}

/// Bin, decide and classify an already computed profile.
pub fn analyze_profile<T: Scalar>(
    profile: &VarianceProfile<T>,
    envelope: &EnvelopeTarget<T>,
    config: &DetectorConfig,
) -> Result<DetectionReport<T>, DetectError> {
    let bins = bin_profile(&profile.sigma2, envelope, config.bins)?;
    let loc = decide_location(&bins, &config.location);
    let (signature, features) = classify_signature(&bins, loc.verdict, &config.signature);
    Ok(DetectionReport {
        verdict: loc.verdict,
        rho: loc.rho,
        ratio: loc.ratio,
        signature,
        features,
        mean_sigma2: profile.mean(),
        dof: profile.dof,
        bins,
        thresholds: *config,
        heuristic: true,
    })
}

/// Full detection on a campaign; also returns the profile.
pub fn detect<T: Scalar>(
    record: &CampaignRecord<T>,
    envelope: &EnvelopeTarget<T>,
    config: &DetectorConfig,
) -> Result<(VarianceProfile<T>, DetectionReport<T>), DetectError> {
    let profile = variance_profile(record)?;
    let report = analyze_profile(&profile, envelope, config)?;
    Ok((profile, report))
}
