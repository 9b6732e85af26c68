//! Periodic random-phase multisines whose RMS envelope follows a target
//! profile within the period.
//!
//! The designer alternates two projections: a time-domain rescaling toward the
//! target envelope and a frequency-domain reset of every excited bin to the
//! uniform amplitude `A0` (all other bins zeroed). Only the phases survive from
//! one iteration to the next, so the amplitude spectrum is flat on the grid at
//! every iterate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use thiserror::Error;

use crate::scalar::{DftPlan, Scalar};

/// Relative floor applied to the measured envelope before dividing by it.
pub const ENVELOPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitationError {
    #[error("period length {n} must be even and at least {min}")]
    BadLength { n: usize, min: usize },
    #[error("excited grid is empty")]
    EmptyGrid,
    #[error("grid index {index} outside 1..={max}")]
    GridOutOfRange { index: usize, max: usize },
    #[error("need at least 2 segments and at most one per sample (got {segments})")]
    TooFewSegments { segments: usize },
    #[error("amplitude must be positive and finite")]
    BadAmplitude,
    #[error("envelope target has {found} samples, period has {expected}")]
    EnvelopeLengthMismatch { expected: usize, found: usize },
    #[error("envelope target must be finite, nonnegative and not identically zero")]
    BadEnvelope,
    #[error("convergence tolerance must be positive")]
    BadTolerance,
}

/// How an [`EnvelopeTarget`] was built.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeShape {
    /// Linear rise over the first half, linear fall over the second.
    Trapezoid { peak: f64 },
    Flat { level: f64 },
    Custom,
}

/// Desired instantaneous RMS for every sample of one period.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTarget<T> {
    rms: Vec<T>,
    shape: EnvelopeShape,
}

impl<T: Scalar> EnvelopeTarget<T> {
    pub fn new(rms: Vec<T>, shape: EnvelopeShape) -> Result<Self, ExcitationError> {
        if rms.is_empty()
            || rms.iter().any(|v| !v.is_finite() || *v < T::zero())
            || rms.iter().all(|v| *v == T::zero())
        {
            return Err(ExcitationError::BadEnvelope);
        }
        Ok(Self { rms, shape })
    }

    pub fn custom(rms: Vec<T>) -> Result<Self, ExcitationError> {
        Self::new(rms, EnvelopeShape::Custom)
    }

    pub fn flat(n: usize, level: T) -> Result<Self, ExcitationError> {
        Self::new(
            vec![level; n],
            EnvelopeShape::Flat {
                level: level.to_f64().unwrap_or(f64::NAN),
            },
        )
    }

    pub fn rms(&self) -> &[T] {
        &self.rms
    }

    pub fn shape(&self) -> &EnvelopeShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.rms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rms.is_empty()
    }

    /// Mean of the squared envelope (the signal power it implies).
    pub fn power(&self) -> T {
        self.rms.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(self.rms.len())
    }

    /// Same shape rescaled so that [`power`](Self::power) equals `power`.
    pub fn scaled_to_power(&self, power: T) -> Self {
        let k = (power / self.power()).sqrt();
        let shape = match self.shape {
            EnvelopeShape::Trapezoid { peak } => EnvelopeShape::Trapezoid {
                peak: peak * k.to_f64().unwrap_or(f64::NAN),
            },
            EnvelopeShape::Flat { level } => EnvelopeShape::Flat {
                level: level * k.to_f64().unwrap_or(f64::NAN),
            },
            EnvelopeShape::Custom => EnvelopeShape::Custom,
        };
        Self {
            rms: self.rms.iter().map(|&v| v * k).collect(),
            shape,
        }
    }

    pub fn squared(&self) -> Vec<T> {
        self.rms.iter().map(|&v| v * v).collect()
    }
}

/// Symmetric triangle `peak * min(t, N + 1 - t) / (N / 2)` for `t = 1..=N`.
///
/// The slope is `2 * peak / N`; with unit mean power the peak is close to
/// `sqrt(3)`, giving slopes of about `+-2 sqrt(3) / N`.
pub fn default_trapezoid_envelope<T: Scalar>(
    n: usize,
    peak_rms: T,
) -> Result<EnvelopeTarget<T>, ExcitationError> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(ExcitationError::BadLength { n, min: 4 });
    }
    if !(peak_rms.is_finite() && peak_rms > T::zero()) {
        return Err(ExcitationError::BadAmplitude);
    }
    let half = T::from_usize_lossy(n / 2);
    let rms = (1..=n)
        .map(|t| peak_rms * T::from_usize_lossy(t.min(n + 1 - t)) / half)
        .collect();
    EnvelopeTarget::new(
        rms,
        EnvelopeShape::Trapezoid {
            peak: peak_rms.to_f64().unwrap_or(f64::NAN),
        },
    )
}

/// Trapezoid scaled to unit mean power.
pub fn unit_power_trapezoid<T: Scalar>(n: usize) -> Result<EnvelopeTarget<T>, ExcitationError> {
    Ok(default_trapezoid_envelope(n, T::one())?.scaled_to_power(T::one()))
}

/// Sorted set of excited harmonic indices, all within `1..=N/2-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcitedGrid {
    n: usize,
    bins: Vec<usize>,
}

impl ExcitedGrid {
    pub fn new(n: usize, mut bins: Vec<usize>) -> Result<Self, ExcitationError> {
        check_period(n)?;
        if bins.is_empty() {
            return Err(ExcitationError::EmptyGrid);
        }
        let max = n / 2 - 1;
        if let Some(&index) = bins.iter().find(|&&k| k == 0 || k > max) {
            return Err(ExcitationError::GridOutOfRange { index, max });
        }
        bins.sort_unstable();
        bins.dedup();
        Ok(Self { n, bins })
    }

    /// Every bin except DC and Nyquist.
    pub fn full(n: usize) -> Result<Self, ExcitationError> {
        check_period(n)?;
        Self::new(n, (1..n / 2).collect())
    }

    pub fn period(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Mean square of a signal with amplitude `a0` on every excited bin.
    pub fn power<T: Scalar>(&self, a0: T) -> T {
        T::lit(2.0) * a0 * a0 * T::from_usize_lossy(self.bins.len()) / T::from_usize_lossy(self.n)
    }

    fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &k in &self.bins {
            m[k] = true;
            m[self.n - k] = true;
        }
        m
    }
}

fn check_period(n: usize) -> Result<(), ExcitationError> {
    if n < 4 || !n.is_multiple_of(2) {
        Err(ExcitationError::BadLength { n, min: 4 })
    } else {
        Ok(())
    }
}

/// One period of a multisine with uniform amplitude on its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultisineSignal<T> {
    samples: Vec<T>,
    grid: ExcitedGrid,
    amplitude: T,
    phases: Vec<T>,
    seed: u64,
}

impl<T: Scalar> MultisineSignal<T> {
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn period(&self) -> usize {
        self.samples.len()
    }

    pub fn grid(&self) -> &ExcitedGrid {
        &self.grid
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    /// Phase of every grid bin, in grid order.
    pub fn phases(&self) -> &[T] {
        &self.phases
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    /// `count` back-to-back copies of the period.
    pub fn repeated(&self, count: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.samples.len() * count);
        for _ in 0..count {
            out.extend_from_slice(&self.samples);
        }
        out
    }
}

/// Random-phase multisine with i.i.d. uniform phases on the grid.
pub fn random_phase_multisine<T: Scalar>(
    grid: &ExcitedGrid,
    amplitude: T,
    seed: u64,
) -> Result<MultisineSignal<T>, ExcitationError> {
    if !(amplitude.is_finite() && amplitude > T::zero()) {
        return Err(ExcitationError::BadAmplitude);
    }
    let n = grid.period();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<T> = grid
        .bins()
        .iter()
        .map(|_| T::lit(rng.random::<f64>() * std::f64::consts::TAU))
        .collect();
    let mut spectrum = vec![Complex::new(T::zero(), T::zero()); n];
    for (&k, &phi) in grid.bins().iter().zip(&phases) {
        let c = Complex::from_polar(amplitude, phi);
        spectrum[k] = c;
        spectrum[n - k] = c.conj();
    }
    let plan = T::plan_dft(n);
    Ok(MultisineSignal {
        samples: plan.inverse_real(&spectrum),
        grid: grid.clone(),
        amplitude,
        phases,
        seed,
    })
}

/// Segment count used by the designer when none is given: `N/256`, at least
/// 16, never more than `N`.
pub fn default_segments(n: usize) -> usize {
    (n / 256).max(16).min(n)
}

/// Per-sample RMS envelope: segment RMS values linearly interpolated between
/// segment midpoints, wrapping around the period.
pub fn instantaneous_rms<T: Scalar>(u: &[T], segments: usize) -> Result<Vec<T>, ExcitationError> {
    let n = u.len();
    if segments < 2 || segments > n {
        return Err(ExcitationError::TooFewSegments { segments });
    }
    let width = n / segments;
    let mut mids = Vec::with_capacity(segments);
    let mut values = Vec::with_capacity(segments);
    for s in 0..segments {
        let start = s * width;
        // The last segment absorbs the remainder.
        let end = if s + 1 == segments { n } else { start + width };
        let seg = &u[start..end];
        let ms = seg.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(seg.len());
        mids.push(T::from_usize_lossy(start + end - 1) / T::lit(2.0));
        values.push(ms.sqrt());
    }

    let period = T::from_usize_lossy(n);
    let mut out = Vec::with_capacity(n);
    // `next` is the first midpoint strictly after t (wrapping).
    let mut next = 0usize;
    for t in 0..n {
        let tf = T::from_usize_lossy(t);
        while next < segments && mids[next] <= tf {
            next += 1;
        }
        let (left, right) = if next == 0 || next == segments {
            (segments - 1, 0)
        } else {
            (next - 1, next)
        };
        let mut x0 = mids[left];
        let mut x1 = mids[right];
        if x1 <= x0 {
            // Wrapped interval.
            if tf < x1 {
                x0 = x0 - period;
            } else {
                x1 = x1 + period;
            }
        }
        let w = if x1 > x0 { (tf - x0) / (x1 - x0) } else { T::zero() };
        out.push(values[left] + (values[right] - values[left]) * w);
    }

    let max = out.iter().copied().fold(T::zero(), T::max);
    let floor = max * T::lit(ENVELOPE_FLOOR);
    out.iter_mut().for_each(|v| *v = v.max(floor));
    Ok(out)
}

/// Relative L2 distance between the measured envelope of `u` and `target`.
pub fn envelope_error<T: Scalar>(
    u: &[T],
    target: &EnvelopeTarget<T>,
    segments: usize,
) -> Result<T, ExcitationError> {
    let env = instantaneous_rms(u, segments)?;
    Ok(relative_l2(&env, target.rms()))
}

fn relative_l2<T: Scalar>(a: &[T], b: &[T]) -> T {
    let num = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>();
    let den = b.iter().map(|&y| y * y).sum::<T>();
    (num / den).sqrt()
}

/// Iteration settings for [`design_nonstationary_multisine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub max_iter: usize,
    /// Stop once the relative improvement of the envelope error drops below
    /// this value.
    pub tol: f64,
    /// `None` selects [`default_segments`].
    pub segments: Option<usize>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-3,
            segments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome<T> {
    /// Best iterate found.
    pub signal: MultisineSignal<T>,
    /// Envelope error of the starting multisine followed by one entry per
    /// iteration.
    pub trace: Vec<T>,
    pub iterations: usize,
    /// Index into `trace` of the returned iterate.
    pub best_iteration: usize,
    /// True when the improvement criterion fired before `max_iter`.
    pub converged: bool,
}

impl<T: Scalar> DesignOutcome<T> {
    pub fn envelope_error(&self) -> T {
        self.trace[self.best_iteration]
    }
}

/// Shape a random-phase multisine toward `target` while keeping `|U(k)| = A0`
/// on the grid and zero elsewhere.
pub fn design_nonstationary_multisine<T: Scalar>(
    target: &EnvelopeTarget<T>,
    grid: &ExcitedGrid,
    amplitude: T,
    seed: u64,
    options: &DesignOptions,
) -> Result<DesignOutcome<T>, ExcitationError> {
    let n = grid.period();
    if target.len() != n {
        return Err(ExcitationError::EnvelopeLengthMismatch {
            expected: n,
            found: target.len(),
        });
    }
    if !(options.tol.is_finite() && options.tol > 0.0) {
        return Err(ExcitationError::BadTolerance);
    }
    let segments = options.segments.unwrap_or_else(|| default_segments(n));
    let tol = T::lit(options.tol);

    let start = random_phase_multisine(grid, amplitude, seed)?;
    let plan = T::plan_dft(n);
    let mask = grid.mask();

    let mut current = start.samples.clone();
    let mut spectrum = plan.forward_real(&current);
    let mut env = instantaneous_rms(&current, segments)?;
    let mut err = relative_l2(&env, target.rms());
    let mut trace = vec![err];
    let mut best = (0usize, current.clone(), spectrum.clone());
    let mut converged = false;

    for iter in 1..=options.max_iter {
        let scaled: Vec<T> = current
            .iter()
            .zip(target.rms())
            .zip(&env)
            .map(|((&u, &goal), &have)| {
                if goal == T::zero() || have == T::zero() {
                    T::zero()
                } else {
                    u * goal / have
                }
            })
            .collect();
        let next_spectrum = project_amplitudes(&plan, &scaled, &spectrum, &mask, amplitude);
        current = plan.inverse_real(&next_spectrum);
        spectrum = next_spectrum;
        env = instantaneous_rms(&current, segments)?;
        let prev = err;
        err = relative_l2(&env, target.rms());
        trace.push(err);
        if err < trace[best.0] {
            best = (iter, current.clone(), spectrum.clone());
        }
        if prev <= T::zero() || (prev - err) / prev < tol {
            converged = true;
            break;
        }
    }

    let (best_iteration, samples, best_spectrum) = best;
    let phases = grid.bins().iter().map(|&k| best_spectrum[k].arg()).collect();
    Ok(DesignOutcome {
        iterations: trace.len() - 1,
        signal: MultisineSignal {
            samples,
            grid: grid.clone(),
            amplitude,
            phases,
            seed,
        },
        trace,
        best_iteration,
        converged,
    })
}

/// DFT of `x`, then magnitude `A0` on the grid (phase kept, or taken from
/// `previous` where `x` has no energy) and zero off the grid.
fn project_amplitudes<T: Scalar>(
    plan: &DftPlan<T>,
    x: &[T],
    previous: &[Complex<T>],
    mask: &[bool],
    amplitude: T,
) -> Vec<Complex<T>> {
    let mut spec = plan.forward_real(x);
    let n = spec.len();
    for k in 0..n {
        if !mask[k] {
            spec[k] = Complex::new(T::zero(), T::zero());
        } else if k <= n / 2 {
            let phase = if spec[k].norm() > T::zero() {
                spec[k].arg()
            } else {
                previous[k].arg()
            };
            spec[k] = Complex::from_polar(amplitude, phase);
        }
    }
    for k in 1..n / 2 {
        if mask[k] {
            spec[n - k] = spec[k].conj();
        }
    }
    spec
}
