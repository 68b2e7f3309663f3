//! Scalar functions routed through `libm` so results do not depend on
//! whether `std` is linked.

use num_traits::Float;

use crate::Real;

#[inline]
pub fn exp(x: Real) -> Real {
    Float::exp(x)
}

#[inline]
pub fn ln(x: Real) -> Real {
    Float::ln(x)
}

#[inline]
pub fn tanh(x: Real) -> Real {
    Float::tanh(x)
}

#[inline]
pub fn sqrt(x: Real) -> Real {
    Float::sqrt(x)
}

#[inline]
pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Numerically stable `log(sum(exp(xs)))`; `-inf` entries contribute zero.
pub fn log_sum_exp(xs: &[Real]) -> Real {
    let max = xs.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    if !max.is_finite() {
        return max;
    }
    max + ln(xs.iter().map(|&x| exp(x - max)).sum::<Real>())
}

/// In-place log-softmax of one row.
pub fn log_softmax_in_place(xs: &mut [Real]) {
    let lse = log_sum_exp(xs);
    for x in xs {
        *x -= lse;
    }
}
