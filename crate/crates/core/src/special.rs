//! Gaussian helpers. Tail probabilities are evaluated in double precision.

use libm::erfc;

use crate::scalar::Real;

/// Standard normal density.
pub fn normal_pdf<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    (-half * x * x).exp() / (T::TAU()).sqrt()
}

/// log of the standard normal density.
pub fn normal_log_pdf<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    -half * x * x - half * T::TAU().ln()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`, accurate in the far tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value `2 (1 - Phi(|x|))`.
pub fn two_sided_p_value(x: f64) -> f64 {
    erfc(x.abs() / std::f64::consts::SQRT_2)
}

/// Neumaier-compensated sum over an ordered sequence.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
