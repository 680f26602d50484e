//! Comparison procedures: universal hard thresholding with known sparsity,
//! the Benjamini-Hochberg step-up procedure, and the l-value rule of the
//! spike-and-slab model with a quasi-Cauchy slab and marginal maximum
//! likelihood estimate of the mixing weight.

use crate::error::{domain, usage, Result};
use crate::rules::{check_threshold, DecisionVector, RuleMeta};
use crate::scalar::Real;
use crate::special::two_sided_p_value;

/// Quasi-Cauchy slab `(2 pi)^{-1/2} x^{-2} (1 - exp(-x^2/2))`, with the limit
/// `1 / (2 sqrt(2 pi))` at zero.
pub fn quasi_cauchy_density<T: Real>(x: T) -> T {
    let inv_sqrt_tau = T::TAU().sqrt().recip();
    if x == T::zero() {
        return T::lit(0.5) * inv_sqrt_tau;
    }
    let x2 = x * x;
    -(-T::lit(0.5) * x2).exp_m1() / x2 * inv_sqrt_tau
}

/// `ln(f(x) / phi(x))` for the quasi-Cauchy slab `f`.
fn log_slab_ratio<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x == T::zero() {
        return -T::LN_2();
    }
    let x2 = x * x;
    (-(-half * x2).exp_m1()).ln() - x2.ln() + half * x2
}

/// Two-groups model `(1 - p) N(0, 1) + p (N(0, 1) * slab)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGroupsModel<T> {
    p: T,
}

impl<T: Real> TwoGroupsModel<T> {
    pub fn new(p: T, n: usize) -> Result<Self> {
        let lo = T::from_usize(n.max(1)).unwrap().recip();
        if !(p >= lo && p <= T::one()) {
            return domain(format!("p must lie in [1/n, 1] = [{lo}, 1], got {p}"));
        }
        Ok(TwoGroupsModel { p })
    }

    pub fn p(&self) -> T {
        self.p
    }
}

/// Posterior probabilities of the null, one per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct EllValues<T> {
    pub values: Vec<T>,
}

/// `l_i = (1 - p) phi(x_i) / ((1 - p) phi(x_i) + p f(x_i))`, evaluated as
/// `1 / (1 + exp(ln p - ln(1 - p) + ln(f/phi)))`.
pub fn ell_values<T: Real>(data: &[T], p: T) -> Result<EllValues<T>> {
    if !(p >= T::zero() && p <= T::one()) {
        return domain(format!("p must lie in [0, 1], got {p}"));
    }
    let log_odds = p.ln() - (T::one() - p).ln();
    let values = data
        .iter()
        .map(|&x| {
            if !x.is_finite() {
                return domain(format!("observation must be finite, got {x}"));
            }
            Ok((T::one() + (log_odds + log_slab_ratio(x)).exp()).recip())
        })
        .collect::<Result<_>>()?;
    Ok(EllValues { values })
}

/// `sum_i ln((1 - p) phi(x_i) + p f(x_i))` up to the constant `sum_i ln phi(x_i)`.
pub fn mmle_log_likelihood<T: Real>(data: &[T], p: T) -> T {
    data.iter()
        .map(|&x| {
            let lr = log_slab_ratio(x);
            if lr > T::zero() {
                // ln(1 - p + p r) = lr + ln(p + (1 - p) / r)
                lr + (p + (T::one() - p) * (-lr).exp()).ln()
            } else {
                (p * lr.exp_m1()).ln_1p()
            }
        })
        .sum()
}

/// Derivative of [`mmle_log_likelihood`] in `p`; non-increasing.
fn score<T: Real>(lrs: &[T], p: T) -> T {
    lrs.iter()
        .map(|&lr| {
            if lr > T::zero() {
                let s = (-lr).exp();
                (T::one() - s) / (s + p * (T::one() - s))
            } else {
                let d = lr.exp_m1();
                d / (T::one() + p * d)
            }
        })
        .sum()
}

/// Marginal maximum likelihood estimate of `p` over `[1/n, 1]`.
pub fn mmle_p<T: Real>(data: &[T]) -> Result<T> {
    let n = data.len();
    if n < 2 {
        return usage(format!("mmle_p needs n >= 2, got {n}"));
    }
    if let Some(x) = data.iter().find(|x| !x.is_finite()) {
        return domain(format!("observation must be finite, got {x}"));
    }
    let lrs: Vec<T> = data.iter().map(|&x| log_slab_ratio(x)).collect();
    let mut lo = T::from_usize(n).unwrap().recip();
    let mut hi = T::one();
    if score(&lrs, lo) <= T::zero() {
        return Ok(lo);
    }
    if score(&lrs, hi) >= T::zero() {
        return Ok(hi);
    }
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(8.0));
    while hi - lo > tol {
        let mid = T::lit(0.5) * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if score(&lrs, mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(T::lit(0.5) * (lo + hi))
}

/// `psi_i = 1{l_i < t}` with `p` set to its marginal maximum likelihood estimate.
pub fn decide_ell<T: Real>(data: &[T], t: T) -> Result<DecisionVector> {
    check_threshold(t)?;
    let p = mmle_p(data)?;
    let ell = ell_values(data, p)?;
    Ok(DecisionVector {
        psi: ell.values.iter().map(|&l| l < t).collect(),
        meta: RuleMeta { p_hat: Some(p.as_f64()), ..Default::default() },
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        domain(format!("alpha must lie in (0, 1), got {alpha}"))
    }
}

/// Step-up procedure on given p-values.
pub fn bh_from_p_values(p_values: &[f64], alpha: f64) -> Result<DecisionVector> {
    check_alpha(alpha)?;
    if let Some(p) = p_values.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return domain(format!("p-values must lie in [0, 1], got {p}"));
    }
    let n = p_values.len();
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let k = (1..=n).rev().find(|&i| sorted[i - 1] <= i as f64 * alpha / nf).unwrap_or(0);
    let psi = if k == 0 {
        vec![false; n]
    } else {
        let cut = sorted[k - 1];
        p_values.iter().map(|&p| p <= cut).collect()
    };
    Ok(DecisionVector { psi, meta: RuleMeta { step_up_k: Some(k), ..Default::default() } })
}

/// Benjamini-Hochberg with two-sided p-values `2 (1 - Phi(|x_i|))`.
pub fn bh_procedure<T: Real>(data: &[T], alpha: f64) -> Result<DecisionVector> {
    if let Some(x) = data.iter().find(|x| !x.is_finite()) {
        return domain(format!("observation must be finite, got {x}"));
    }
    let p: Vec<f64> = data.iter().map(|x| two_sided_p_value(x.as_f64())).collect();
    bh_from_p_values(&p, alpha)
}

/// Default level `1 / ln n`.
pub fn bh_auto_alpha(n: usize) -> f64 {
    1.0 / (n as f64).ln()
}

/// `sqrt(2 ln(n / q_n))`.
pub fn universal_threshold(n: usize, q_n: usize) -> Result<f64> {
    if q_n < 1 || q_n >= n {
        return usage(format!("q_n must satisfy 1 <= q_n < n, got q_n = {q_n}, n = {n}"));
    }
    Ok((2.0 * (n as f64 / q_n as f64).ln()).sqrt())
}

/// `psi_i = 1{|x_i| >= sqrt(2 ln(n / q_n))}`.
pub fn oracle_threshold<T: Real>(data: &[T], q_n: usize) -> Result<DecisionVector> {
    let cut = universal_threshold(data.len(), q_n)?;
    Ok(DecisionVector::new(data.iter().map(|x| x.abs().as_f64() >= cut).collect()))
}
