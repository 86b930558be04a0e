//! Floating-point scalar abstraction and compensated summation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Real scalar used throughout the planners (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumCast + Default + Debug + Display + Sum + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("literal representable in scalar type")
}

/// Smallest density accepted inside a logarithm.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[inline]
fn density_floor<T: Scalar>() -> T {
    T::from_f64(DENSITY_FLOOR).unwrap_or_else(T::min_positive_value).max(T::min_positive_value())
}

/// `ln(max(x, DENSITY_FLOOR))`.
#[inline]
pub fn floored_ln<T: Scalar>(x: T) -> T {
    x.max(density_floor()).ln()
}

/// Clamps a log-density from below at `ln(DENSITY_FLOOR)`; NaN passes through.
#[inline]
pub fn floor_log<T: Scalar>(log_x: T) -> T {
    let floor = density_floor::<T>().ln();
    if log_x < floor {
        floor
    } else {
        log_x
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum<T> {
    sum: T,
    comp: T,
}

impl<T: Scalar> NeumaierSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), comp: T::zero() }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    let mut acc = NeumaierSum::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

/// Numerically stable `ln Σ exp(v_i)`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let s = compensated_sum(values.iter().map(|&v| (v - max).exp()));
    max + s.ln()
}

/// Index of the first maximum; `None` when the iterator is empty.
pub fn first_argmax<T: PartialOrd + Copy, I: IntoIterator<Item = T>>(iter: I) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in iter.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16_f64];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1e16);
        assert_eq!(compensated_sum(v), 1000.0);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1_f64, -2.0, 3.5];
        let direct: f64 = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(first_argmax([1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(first_argmax(Vec::<f64>::new()), None);
    }

    #[test]
    fn floor_is_applied() {
        assert_eq!(floored_ln(0.0_f64), 1e-300_f64.ln());
        assert_eq!(floor_log(f64::NEG_INFINITY), 1e-300_f64.ln());
        assert_eq!(floor_log(-1.0_f64), -1.0);
        assert!(floor_log(f64::NAN).is_nan());
        assert!(floored_ln(0.0_f32).is_finite());
    }
}
