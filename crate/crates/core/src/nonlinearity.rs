//! Memoryless nonlinear block.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("polynomial needs at least one coefficient")]
    EmptyPolynomial,
    #[error("coefficient {index} is not finite")]
    NonFiniteCoefficient { index: usize },
    #[error("bounds must satisfy lo < hi (got lo={lo}, hi={hi})")]
    BadBounds { lo: f64, hi: f64 },
    #[error("input sample {index} is not finite")]
    NonFiniteInput { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticNonlinearity<T> {
    /// `f(x) = sum_i c[i] x^i`.
    Polynomial(Vec<T>),
    /// Clip to `[lo, hi]`.
    Saturation { lo: T, hi: T },
    /// Zero on `(lo, hi)`, unit slope outside, continuous at the knots.
    DeadZone { lo: T, hi: T },
}

impl<T: Scalar> StaticNonlinearity<T> {
    pub fn polynomial(coeffs: Vec<T>) -> Result<Self, NonlinearityError> {
        if coeffs.is_empty() {
            return Err(NonlinearityError::EmptyPolynomial);
        }
        if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(NonlinearityError::NonFiniteCoefficient { index });
        }
        Ok(Self::Polynomial(coeffs))
    }

    pub fn saturation(lo: T, hi: T) -> Result<Self, NonlinearityError> {
        check_bounds(lo, hi)?;
        Ok(Self::Saturation { lo, hi })
    }

    pub fn dead_zone(lo: T, hi: T) -> Result<Self, NonlinearityError> {
        check_bounds(lo, hi)?;
        Ok(Self::DeadZone { lo, hi })
    }

    /// Coefficients `a_0..a_n` for the polynomial variant, `None` otherwise.
    pub fn polynomial_coefficients(&self) -> Option<&[T]> {
        match self {
            Self::Polynomial(c) => Some(c),
            _ => None,
        }
    }

    #[inline]
    pub fn eval_sample(&self, x: T) -> T {
        match self {
            Self::Polynomial(c) => horner(c, x),
            Self::Saturation { lo, hi } => {
                if x <= *lo {
                    *lo
                } else if x >= *hi {
                    *hi
                } else {
                    x
                }
            }
            Self::DeadZone { lo, hi } => {
                if x <= *lo {
                    x - *lo
                } else if x >= *hi {
                    x - *hi
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Pointwise application.
    pub fn eval(&self, x: &[T]) -> Result<Vec<T>, NonlinearityError> {
        x.iter()
            .enumerate()
            .map(|(index, &v)| {
                if v.is_finite() {
                    Ok(self.eval_sample(v))
                } else {
                    Err(NonlinearityError::NonFiniteInput { index })
                }
            })
            .collect()
    }
}

fn check_bounds<T: Scalar>(lo: T, hi: T) -> Result<(), NonlinearityError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(NonlinearityError::BadBounds {
            lo: lo.to_f64().unwrap_or(f64::NAN),
            hi: hi.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

#[inline]
fn horner<T: Scalar>(coeffs: &[T], x: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
}
