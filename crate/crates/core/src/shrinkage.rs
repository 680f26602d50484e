//! Posterior shrinkage functionals `E(kappa | x, tau)` and `E(1 - kappa | x, tau)`
//! with `kappa = 1 / (1 + lambda^2 tau^2)` and unit noise variance.
//!
//! Substituting `t = lambda^2`,
//!
//! ```text
//! E(1 - kappa | x, tau) = N / D
//! D = ∫ (1 + t tau^2)^(-1/2) t^(-a-1) L(t) exp(-(x^2/2) / (1 + t tau^2)) dt
//! N = ∫ w(t) (1 + t tau^2)^(-1/2) t^(-a-1) L(t) exp(-(x^2/2) / (1 + t tau^2)) dt
//! ```
//!
//! with `w(t) = t tau^2 / (1 + t tau^2)`. The exponent is the usual
//! `(x^2/2) w(t)` shifted by `-x^2/2`, so it is never positive and the integrand
//! cannot overflow for any finite `x`. Both integrals are evaluated in
//! `y = ln t`, split at `t = 1, 1/tau^2, 1/tau^4`, and rescaled by the largest
//! log-integrand value on a coarse scan so the quadrature works on numbers of
//! order one. `D` is also, up to a factor that does not depend on `tau`, the
//! marginal density of `x` given `tau`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::kernels::PriorKernel;
use crate::quadrature::{integrate, Piece, QuadratureConfig};
use crate::scalar::Real;

/// A single `(x, tau)` evaluation point for a kernel.
#[derive(Debug, Clone, Copy)]
pub struct ShrinkageQuery<'k, T> {
    x: T,
    tau: T,
    kernel: &'k PriorKernel<T>,
}

impl<'k, T: Real> ShrinkageQuery<'k, T> {
    /// `x` must be finite and `0 < tau <= 1`.
    pub fn new(x: T, tau: T, kernel: &'k PriorKernel<T>) -> Result<Self> {
        if !x.is_finite() {
            return domain(format!("observation must be finite, got {x}"));
        }
        check_tau(tau)?;
        Ok(ShrinkageQuery { x, tau, kernel })
    }

    pub fn x(&self) -> T {
        self.x
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn kernel(&self) -> &'k PriorKernel<T> {
        self.kernel
    }
}

pub(crate) fn check_tau<T: Real>(tau: T) -> Result<()> {
    if tau > T::zero() && tau <= T::one() {
        Ok(())
    } else {
        domain(format!("global scale tau must lie in (0, 1], got {tau}"))
    }
}

/// Both integrals of one quadrature pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageIntegrals<T> {
    /// `E(1 - kappa | x, tau)`.
    pub e_one_minus_kappa: T,
    /// `ln D`, the log marginal density of `x` up to a `tau`-free constant.
    pub log_marginal: T,
}

impl<T: Real> ShrinkageIntegrals<T> {
    pub fn e_kappa(&self) -> T {
        T::one() - self.e_one_minus_kappa
    }
}

/// Unnormalized log integrand of `D` in `y = ln t` (Jacobian included) and the
/// weight `w(t)`.
#[inline]
fn log_integrand<T: Real>(kernel: &PriorKernel<T>, half_x2: T, ln_tau2: T, y: T) -> (T, T) {
    let t = y.exp();
    let s = (y + ln_tau2).exp();
    let inv = (T::one() + s).recip();
    let lb = -kernel.a() * y + kernel.log_l_unchecked(t) - T::lit(0.5) * s.ln_1p() - half_x2 * inv;
    let w = if s > T::one() { (T::one() + s.recip()).recip() } else { s * inv };
    (lb, w)
}

fn pieces_for<T: Real>(ln_inv_tau: T) -> Vec<Piece<T>> {
    let two = T::lit(2.0);
    let mut cuts = vec![T::zero(), two * ln_inv_tau, two * two * ln_inv_tau];
    cuts.dedup_by(|a, b| a <= b);
    let mut pieces = vec![Piece::LowerTail(cuts[0])];
    for w in cuts.windows(2) {
        pieces.push(Piece::Finite(w[0], w[1]));
    }
    pieces.push(Piece::UpperTail(*cuts.last().unwrap()));
    pieces
}

/// One quadrature pass returning `E(1 - kappa)` and the log marginal.
pub fn shrinkage_integrals<T: Real>(
    query: &ShrinkageQuery<'_, T>,
    config: &QuadratureConfig<T>,
) -> Result<ShrinkageIntegrals<T>> {
    config.validate()?;
    let kernel = query.kernel;
    let half_x2 = T::lit(0.5) * query.x * query.x;
    let ln_tau2 = T::lit(2.0) * query.tau.ln();
    let ln_inv_tau = -query.tau.ln();

    // Coarse scan for a scale shift.
    let lo = T::lit(-40.0);
    let hi = T::lit(4.0) * ln_inv_tau + T::lit(40.0);
    let scan = 96;
    let mut shift = T::neg_infinity();
    for i in 0..=scan {
        let y = lo + (hi - lo) * T::from_usize(i).unwrap() / T::from_usize(scan).unwrap();
        let (lb, _) = log_integrand(kernel, half_x2, ln_tau2, y);
        if lb.is_finite() {
            shift = shift.max(lb);
        }
    }
    if !shift.is_finite() {
        return domain("integrand vanishes on the scan grid");
    }

    let pieces = pieces_for(ln_inv_tau);
    let est = integrate(
        |y| {
            let (lb, w) = log_integrand(kernel, half_x2, ln_tau2, y);
            let b = (lb - shift).exp();
            // Far tails of the mapped pieces can produce inf - inf.
            if b.is_finite() {
                [b, b * w]
            } else {
                [T::zero(), T::zero()]
            }
        },
        &pieces,
        config,
    );
    let [den, num] = est.value;
    if !est.converged {
        return Err(Error::NonConvergence {
            subdivisions: est.subdivisions,
            numerator: num.as_f64(),
            numerator_err: est.error[1].as_f64(),
            denominator: den.as_f64(),
            denominator_err: est.error[0].as_f64(),
        });
    }
    if !(den > T::zero()) {
        return domain("denominator integral is not positive");
    }
    let ratio = num / den;
    // Keep the value strictly inside (0, 1).
    let tiny = T::min_positive_value();
    let one_minus = T::one() - T::epsilon();
    Ok(ShrinkageIntegrals {
        e_one_minus_kappa: ratio.max(tiny).min(one_minus),
        log_marginal: shift + den.ln(),
    })
}

/// `E(1 - kappa | x, tau)`.
pub fn expected_one_minus_kappa<T: Real>(
    query: &ShrinkageQuery<'_, T>,
    config: &QuadratureConfig<T>,
) -> Result<T> {
    shrinkage_integrals(query, config).map(|r| r.e_one_minus_kappa)
}

/// `E(kappa | x, tau) = 1 - E(1 - kappa | x, tau)` from the same pass.
pub fn expected_kappa<T: Real>(query: &ShrinkageQuery<'_, T>, config: &QuadratureConfig<T>) -> Result<T> {
    shrinkage_integrals(query, config).map(|r| r.e_kappa())
}

/// `ln m(x | tau)` up to an additive constant that does not depend on `x` or `tau`.
pub fn log_marginal_unnorm<T: Real>(
    query: &ShrinkageQuery<'_, T>,
    config: &QuadratureConfig<T>,
) -> Result<T> {
    shrinkage_integrals(query, config).map(|r| r.log_marginal)
}

/// Log of the unnormalized posterior density of `kappa` given `x` and `tau`:
/// `kappa^(a-1/2) (1-kappa)^(-a-1) L((1/kappa - 1)/tau^2) exp((1-kappa) x^2/2)`.
pub fn log_posterior_kappa_density_unnorm<T: Real>(query: &ShrinkageQuery<'_, T>, kappa: T) -> Result<T> {
    if !(kappa > T::zero() && kappa < T::one()) {
        return domain(format!("kappa must lie in (0, 1), got {kappa}"));
    }
    let a = query.kernel.a();
    let half = T::lit(0.5);
    let t = (kappa.recip() - T::one()) / (query.tau * query.tau);
    Ok((a - half) * kappa.ln() - (a + T::one()) * (T::one() - kappa).ln()
        + query.kernel.log_l(t)?
        + (T::one() - kappa) * query.x * query.x * half)
}

/// Reusable evaluator bound to a kernel and quadrature settings.
#[derive(Debug, Clone)]
pub struct ShrinkageEngine<T> {
    pub kernel: PriorKernel<T>,
    pub config: QuadratureConfig<T>,
}

impl<T: Real> ShrinkageEngine<T> {
    pub fn new(kernel: PriorKernel<T>) -> Self {
        ShrinkageEngine { kernel, config: QuadratureConfig::default() }
    }

    pub fn integrals(&self, x: T, tau: T) -> Result<ShrinkageIntegrals<T>> {
        shrinkage_integrals(&ShrinkageQuery::new(x, tau, &self.kernel)?, &self.config)
    }

    pub fn e_one_minus_kappa(&self, x: T, tau: T) -> Result<T> {
        self.integrals(x, tau).map(|r| r.e_one_minus_kappa)
    }
}

/// Self-normalized importance sampling estimate with its jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

const ORACLE_BLOCKS: u64 = 128;

/// Independent estimate of `E(1 - kappa | x, tau)` from prior draws of
/// `lambda^2`:
///
/// `E_prior[(1-kappa) N(x; 0, 1 + tau^2 lambda^2)] / E_prior[N(x; 0, 1 + tau^2 lambda^2)]`.
///
/// Draws are split into fixed blocks, each with its own ChaCha stream keyed by
/// `(seed, block)`, so the result does not depend on the thread count. The
/// standard error is the delete-one-block jackknife of the ratio.
pub fn importance_oracle<T: Real>(query: &ShrinkageQuery<'_, T>, n_draws: u64, seed: u64) -> Result<OracleEstimate> {
    if n_draws < 10_000 {
        return usage(format!("importance oracle needs at least 10^4 draws, got {n_draws}"));
    }
    let sampler = query.kernel.sampler()?;
    let x2 = query.x.as_f64().powi(2);
    let tau2 = query.tau.as_f64().powi(2);
    let base = n_draws / ORACLE_BLOCKS;
    let extra = n_draws % ORACLE_BLOCKS;

    let sums: Vec<(f64, f64)> = (0..ORACLE_BLOCKS)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let draws = base + u64::from(block < extra);
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for _ in 0..draws {
                let s = tau2 * sampler.sample(&mut rng);
                let v = 1.0 + s;
                let w = (-0.5 * x2 / v).exp() / v.sqrt();
                den += w;
                num += w * (s / v);
            }
            (num, den)
        })
        .collect();

    let num_total: f64 = sums.iter().map(|s| s.0).sum();
    let den_total: f64 = sums.iter().map(|s| s.1).sum();
    if !(den_total > 0.0) {
        return domain("all importance weights underflowed");
    }
    let estimate = num_total / den_total;
    let m = sums.len() as f64;
    let loo: Vec<f64> = sums.iter().map(|(n, d)| (num_total - n) / (den_total - d)).collect();
    let mean = loo.iter().sum::<f64>() / m;
    let var = (m - 1.0) / m * loo.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
    Ok(OracleEstimate { estimate, std_error: var.sqrt() })
}

/// `tau L(1/tau^2) / sqrt(log(1/tau^2))`, the shape of the per-null type I
/// error bound for horseshoe-type kernels (constants omitted).
pub fn type1_bound_rate<T: Real>(kernel: &PriorKernel<T>, tau: T) -> Result<T> {
    if !(tau > T::zero() && tau < (-T::one()).exp()) {
        return domain(format!("rate requires 0 < tau < 1/e, got {tau}"));
    }
    let inv_tau2 = (tau * tau).recip();
    Ok(tau * kernel.eval_l(inv_tau2)? / inv_tau2.ln().sqrt())
}

/// Log of the upper-bound rate on `E(1 - kappa | x, tau)` when `a > 1/2`:
/// `x^2/2 + 2a ln tau` for `a < 1`, and `x^2/2 + 2 ln tau + ln ln(1/tau)` for
/// `a >= 1` (constants omitted).
pub fn large_a_upper_rate<T: Real>(kernel: &PriorKernel<T>, x: T, tau: T) -> Result<T> {
    let a = kernel.a();
    if !(a > T::lit(0.5)) {
        return usage(format!("rate applies only to kernels with a > 1/2, got a = {a}"));
    }
    if !(tau > T::zero() && tau < (-T::one()).exp()) {
        return domain(format!("rate requires 0 < tau < 1/e, got {tau}"));
    }
    let two = T::lit(2.0);
    let half_x2 = T::lit(0.5) * x * x;
    if a < T::one() {
        Ok(half_x2 + two * a * tau.ln())
    } else {
        Ok(half_x2 + two * tau.ln() + (-tau.ln()).ln())
    }
}
