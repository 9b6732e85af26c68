//! Floating-point scalar abstraction shared by every block.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::Arc;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// f32 or f64.
///
/// FFT planning and Gaussian sampling are provided per concrete type so the
/// generic code only ever sees `Float` methods.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Draw one N(0, 1) sample.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Plan a length-`len` complex DFT pair.
    fn plan_dft(len: usize) -> DftPlan<Self>;

    /// Literal conversion; every value passed here is representable.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in a float")
    }
}

type Transform<T> = Arc<dyn Fn(&mut [Complex<T>]) + Send + Sync>;

/// Unitary DFT of fixed length: `X(k) = 1/sqrt(N) sum_t x(t) exp(-j 2 pi k t / N)`.
#[derive(Clone)]
pub struct DftPlan<T> {
    len: usize,
    forward: Transform<T>,
    inverse: Transform<T>,
}

impl<T: Scalar> DftPlan<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Forward transform of a real sequence.
    pub fn forward_real(&self, x: &[T]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.len, "DFT length mismatch");
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        (self.forward)(&mut buf);
        let norm = T::one() / T::from_usize_lossy(self.len).sqrt();
        buf.iter_mut().for_each(|c| *c = *c * norm);
        buf
    }

    /// Inverse transform; returns the real part (the caller supplies a
    /// Hermitian spectrum).
    pub fn inverse_real(&self, spectrum: &[Complex<T>]) -> Vec<T> {
        assert_eq!(spectrum.len(), self.len, "DFT length mismatch");
        let mut buf = spectrum.to_vec();
        (self.inverse)(&mut buf);
        let norm = T::one() / T::from_usize_lossy(self.len).sqrt();
        buf.iter().map(|c| c.re * norm).collect()
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn plan_dft(len: usize) -> DftPlan<Self> {
                let mut planner = FftPlanner::<$t>::new();
                let fwd = planner.plan_fft_forward(len);
                let inv = planner.plan_fft_inverse(len);
                DftPlan {
                    len,
                    forward: Arc::new(move |buf: &mut [Complex<$t>]| fwd.process(buf)),
                    inverse: Arc::new(move |buf: &mut [Complex<$t>]| inv.process(buf)),
                }
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Population mean.
pub(crate) fn mean<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len())
}

/// Population variance (divisor `len`).
pub(crate) fn variance<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let m = mean(x);
    x.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_usize_lossy(x.len())
}

/// Pearson correlation; `None` when either sequence has zero spread.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    if denom <= T::zero() || !denom.is_finite() {
        None
    } else {
        Some(sab / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parseval_holds_for_unitary_dft() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0).collect();
        let plan = f64::plan_dft(64);
        let spec = plan.forward_real(&x);
        let et: f64 = x.iter().map(|v| v * v).sum();
        let ef: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        assert!((et - ef).abs() < 1e-10 * et);
        let back = plan.inverse_real(&spec);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_of_degenerate_sequence_is_none() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        let r = pearson(&[1.0f32, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-6);
    }
}
