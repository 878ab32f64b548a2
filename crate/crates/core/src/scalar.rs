//! Scalar abstraction shared by every numerical kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the engine computes in: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// Relative singular-value threshold below which a matrix is treated as
    /// rank deficient.
    #[inline]
    fn rank_tolerance() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(4.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// log of the standard normal density.
#[inline]
pub fn ln_std_normal_pdf<T: Scalar>(x: T) -> T {
    -T::lit(0.5) * x * x - T::lit(LN_SQRT_2PI)
}

#[inline]
pub fn std_normal_pdf<T: Scalar>(x: T) -> T {
    ln_std_normal_pdf(x).exp()
}

/// Standard normal CDF, evaluated through `erfc` so the lower tail keeps
/// full relative precision.
#[inline]
pub fn std_normal_cdf<T: Scalar>(x: T) -> T {
    let v = 0.5 * libm::erfc(-x.as_f64() / std::f64::consts::SQRT_2);
    T::lit(v)
}

/// `log(sum(exp(xs)))`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == T::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 + a) / a`, continuous through `a = 0`.
#[inline]
pub fn ln1p_ratio<T: Scalar>(a: T) -> T {
    if a.abs() < T::lit(1e-8) {
        T::one() - a * T::lit(0.5)
    } else {
        a.ln_1p() / a
    }
}

#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// `log(logistic(x))` without cancellation.
#[inline]
pub fn ln_logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_reference_values() {
        assert!((std_normal_pdf(1.0_f64) - 0.241_970_724_519_143_37).abs() < 1e-15);
        assert!((std_normal_cdf(1.0_f64) - std_normal_cdf(-1.0) - 0.682_689_492_137_085_9).abs() < 1e-14);
        assert!((std_normal_cdf(-30.0_f64) / 4.906_713_927_148_187e-198 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lse_handles_large_and_empty() {
        let v = log_sum_exp(&[1000.0_f64, 1000.0 + 2f64.ln()]);
        assert!((v - (1000.0 + 3f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_add_exp(0.0_f64, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_pair_round_trips() {
        for &p in &[1e-9_f64, 0.3, 0.6, 0.999_999] {
            assert!((logistic(logit(p)) - p).abs() < 1e-12);
        }
        assert!((ln_logistic(-800.0_f64) + 800.0).abs() < 1e-9);
        assert!((ln1p_ratio(1e-10_f64) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn f32_paths_agree() {
        assert!((std_normal_cdf(0.5_f32) - 0.691_462_5).abs() < 1e-6);
        assert!((log_sum_exp(&[0.0_f32, 0.0, 0.0]) - 3f32.ln()).abs() < 1e-6);
    }
}
