//! Rational discrete-time filters `B(z^-1) / A(z^-1)`.
//!
//! Used for the linear blocks of the Wiener-Hammerstein chain and for the
//! noise-shaping filters. Realized in transposed direct form II; the state
//! lives in a separate [`FilterState`] so one filter can drive many streams.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::scalar::Scalar;

/// Poles with magnitude at or above `1 - STABILITY_MARGIN` are rejected.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("denominator has no coefficients")]
    EmptyDenominator,
    #[error("numerator has no coefficients")]
    EmptyNumerator,
    #[error("leading denominator coefficient is zero")]
    ZeroLeadingCoefficient,
    #[error("coefficient {index} is not finite")]
    NonFiniteCoefficient { index: usize },
    #[error("unstable filter: pole magnitude {max_pole_magnitude} >= 1")]
    UnstableFilter { max_pole_magnitude: f64 },
    #[error("filter state has {found} taps, filter order needs {expected}")]
    StateSizeMismatch { expected: usize, found: usize },
}

/// Validated stable rational transfer function in powers of `z^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction<T> {
    numerator: Vec<T>,
    denominator: Vec<T>,
    // Coefficients divided by a0 and zero-padded to order + 1.
    b: Vec<T>,
    a: Vec<T>,
}

impl<T: Scalar> TransferFunction<T> {
    /// Build and validate a filter; rejects any pole on or outside the unit
    /// circle.
    pub fn new(numerator: Vec<T>, denominator: Vec<T>) -> Result<Self, FilterError> {
        if denominator.is_empty() {
            return Err(FilterError::EmptyDenominator);
        }
        if numerator.is_empty() {
            return Err(FilterError::EmptyNumerator);
        }
        if let Some(index) = denominator.iter().position(|c| !c.is_finite()) {
            return Err(FilterError::NonFiniteCoefficient { index });
        }
        if let Some(index) = numerator.iter().position(|c| !c.is_finite()) {
            return Err(FilterError::NonFiniteCoefficient { index });
        }
        if denominator[0] == T::zero() {
            return Err(FilterError::ZeroLeadingCoefficient);
        }
        let max_pole = pole_magnitudes_of(&denominator)
            .into_iter()
            .fold(0.0f64, f64::max);
        if max_pole >= 1.0 - STABILITY_MARGIN {
            return Err(FilterError::UnstableFilter {
                max_pole_magnitude: max_pole,
            });
        }

        let order = numerator.len().max(denominator.len()) - 1;
        let a0 = denominator[0];
        let mut b = vec![T::zero(); order + 1];
        let mut a = vec![T::zero(); order + 1];
        for (dst, &src) in b.iter_mut().zip(&numerator) {
            *dst = src / a0;
        }
        for (dst, &src) in a.iter_mut().zip(&denominator) {
            *dst = src / a0;
        }
        Ok(Self {
            numerator,
            denominator,
            b,
            a,
        })
    }

    /// `H(z) = 1`.
    pub fn identity() -> Self {
        Self::new(vec![T::one()], vec![T::one()]).expect("identity is stable")
    }

    /// Pure gain `H(z) = g`.
    pub fn gain(g: T) -> Result<Self, FilterError> {
        Self::new(vec![g], vec![T::one()])
    }

    pub fn numerator(&self) -> &[T] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[T] {
        &self.denominator
    }

    /// Number of delay elements, `max(nb, na)`.
    pub fn order(&self) -> usize {
        self.b.len() - 1
    }

    /// Magnitudes of the roots of the denominator polynomial in `z`.
    pub fn pole_magnitudes(&self) -> Vec<T> {
        pole_magnitudes_of(&self.denominator)
            .into_iter()
            .map(T::lit)
            .collect()
    }

    /// Fresh zero state sized for this filter.
    pub fn new_state(&self) -> FilterState<T> {
        FilterState::zeros(self.order())
    }

    /// Filter `x` from `state`, updating it so consecutive calls stream
    /// seamlessly.
    pub fn apply(&self, x: &[T], state: &mut FilterState<T>) -> Result<Vec<T>, FilterError> {
        let mut out = Vec::with_capacity(x.len());
        self.apply_into(x, state, &mut out)?;
        Ok(out)
    }

    /// Like [`apply`](Self::apply) but appends to `out`.
    pub fn apply_into(
        &self,
        x: &[T],
        state: &mut FilterState<T>,
        out: &mut Vec<T>,
    ) -> Result<(), FilterError> {
        let order = self.order();
        if state.taps.len() != order {
            return Err(FilterError::StateSizeMismatch {
                expected: order,
                found: state.taps.len(),
            });
        }
        out.reserve(x.len());
        let (b, a, s) = (&self.b, &self.a, &mut state.taps);
        for &xn in x {
            let y = if order == 0 {
                b[0] * xn
            } else {
                let y = b[0] * xn + s[0];
                for i in 0..order - 1 {
                    s[i] = b[i + 1] * xn - a[i + 1] * y + s[i + 1];
                }
                s[order - 1] = b[order] * xn - a[order] * y;
                y
            };
            out.push(y);
        }
        Ok(())
    }

    /// Zero-state response.
    pub fn filter(&self, x: &[T]) -> Vec<T> {
        let mut state = self.new_state();
        self.apply(x, &mut state).expect("state sized by the filter")
    }
}

/// Delay line of a transposed direct-form realization.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<T> {
    taps: Vec<T>,
}

impl<T: Scalar> FilterState<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            taps: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn reset(&mut self) {
        self.taps.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }
}

/// Eigenvalues of the companion matrix of `a0 z^n + a1 z^(n-1) + ... + an`.
///
/// Works in f64 whatever the filter scalar is.
fn pole_magnitudes_of<T: Scalar>(den: &[T]) -> Vec<f64> {
    let coeffs: Vec<f64> = den.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect();
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Vec::new();
    }
    let a0 = coeffs[0];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for j in 0..degree {
        companion[(0, j)] = -coeffs[j + 1] / a0;
    }
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect()
}
