//! Float helpers on top of `libm` so results do not depend on the platform libm.

#[inline]
pub(crate) fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// In-place softmax with inverse temperature `beta`, max-subtracted.
pub(crate) fn softmax_into(logits: &[f64], beta: f64, out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(beta * x));
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = exp(beta * x - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `log(sum(exp(x)))`, max-subtracted.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + ln(xs.iter().map(|&x| exp(x - max)).sum::<f64>())
}

/// Neumaier-compensated sum; keeps reductions stable under reordering.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let t = sum + x;
        if abs(sum) >= abs(x) {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `(sum x^kappa)^(1/kappa)` for positive `x`, scaled by the max to avoid
/// overflow.
pub(crate) fn smooth_max_unchecked(x: &[f64], kappa: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |a, &b| a.max(b));
    let s: f64 = x.iter().map(|&v| pow(v / m, kappa)).sum();
    m * pow(s, 1.0 / kappa)
}
