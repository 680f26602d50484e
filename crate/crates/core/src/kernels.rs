//! Prior kernels `pi(lambda^2) ∝ (lambda^2)^(-a-1) L(lambda^2)` for the local
//! scale of a global-local prior.
//!
//! The normalizing constant is never formed: every posterior functional used
//! downstream is a ratio of integrals in which it cancels.
//!
//! Built-in families:
//!
//! * three parameter beta normal `TPBN(alpha, beta)`: `a = alpha`,
//!   `L(t) = (t / (1 + t))^(alpha + beta)`. The mixing density is then the beta
//!   prime density `t^(beta-1) (1 + t)^(-alpha-beta)`. `TPBN(1/2, 1/2)` is the
//!   horseshoe and `TPBN(1/2, 1)` the Strawderman–Berger prior.
//! * inverse gamma with shape `a` and unit scale: `L(t) = exp(-1/t)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::scalar::Real;

/// `log L(t)` supplied by the caller for a custom kernel.
pub type LogSlowlyVarying<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum KernelFamily<T> {
    Tpbn { alpha: T, beta: T },
    InverseGamma { shape: T },
    /// Kernel given directly by `log L`; has no sampler.
    Custom(LogSlowlyVarying<T>),
}

/// Exponent `a` plus slowly varying part `L` of the local-scale prior.
#[derive(Clone)]
pub struct PriorKernel<T> {
    a: T,
    name: String,
    family: KernelFamily<T>,
}

impl<T: fmt::Debug> fmt::Debug for PriorKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PriorKernel")
            .field("name", &self.name)
            .field("a", &self.a)
            .field(
                "family",
                &match &self.family {
                    KernelFamily::Tpbn { .. } => "tpbn",
                    KernelFamily::InverseGamma { .. } => "inv-gamma",
                    KernelFamily::Custom(_) => "custom",
                },
            )
            .finish()
    }
}

fn check_positive<T: Real>(what: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{what} must be positive and finite, got {v}"))
    }
}

fn check_exponent<T: Real>(a: T) -> Result<()> {
    if a >= T::lit(0.5) && a.is_finite() {
        Ok(())
    } else {
        domain(format!("kernel exponent a must be >= 1/2, got {a}"))
    }
}

impl<T: Real> PriorKernel<T> {
    pub fn tpbn(alpha: T, beta: T) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("beta", beta)?;
        check_exponent(alpha)?;
        let half = T::lit(0.5);
        let name = if alpha == half && beta == half {
            "horseshoe".to_string()
        } else if alpha == half && beta == T::one() {
            "strawderman-berger".to_string()
        } else {
            format!("tpbn:{alpha}:{beta}")
        };
        Ok(PriorKernel { a: alpha, name, family: KernelFamily::Tpbn { alpha, beta } })
    }

    pub fn horseshoe() -> Self {
        Self::tpbn(T::lit(0.5), T::lit(0.5)).expect("valid parameters")
    }

    pub fn strawderman_berger() -> Self {
        Self::tpbn(T::lit(0.5), T::one()).expect("valid parameters")
    }

    pub fn inverse_gamma(shape: T) -> Result<Self> {
        check_positive("shape", shape)?;
        check_exponent(shape)?;
        Ok(PriorKernel {
            a: shape,
            name: format!("inv-gamma:{shape}"),
            family: KernelFamily::InverseGamma { shape },
        })
    }

    /// Kernel from an exponent and `log L`. The caller is responsible for
    /// `L` being positive and bounded; use [`validate_kernel`] to check.
    pub fn custom(name: impl Into<String>, a: T, log_l: LogSlowlyVarying<T>) -> Result<Self> {
        check_positive("a", a)?;
        check_exponent(a)?;
        Ok(PriorKernel { a, name: name.into(), family: KernelFamily::Custom(log_l) })
    }

    /// Parses `horseshoe`, `strawderman-berger`, `tpbn:ALPHA:BETA` or `inv-gamma:A`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let num = |s: &str| -> Result<T> {
            s.parse::<f64>()
                .map(T::lit)
                .map_err(|_| Error::Usage(format!("invalid number `{s}` in kernel `{spec}`")))
        };
        match parts.as_slice() {
            ["horseshoe"] => Ok(Self::horseshoe()),
            ["strawderman-berger"] => Ok(Self::strawderman_berger()),
            ["tpbn", alpha, beta] => Self::tpbn(num(alpha)?, num(beta)?),
            ["inv-gamma", shape] => Self::inverse_gamma(num(shape)?),
            _ => usage(format!("unknown kernel `{spec}`")),
        }
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> &KernelFamily<T> {
        &self.family
    }

    pub fn family_params(&self) -> Vec<T> {
        match self.family {
            KernelFamily::Tpbn { alpha, beta } => vec![alpha, beta],
            KernelFamily::InverseGamma { shape } => vec![shape],
            KernelFamily::Custom(_) => Vec::new(),
        }
    }

    /// True when `a == 1/2`.
    pub fn is_horseshoe_type(&self) -> bool {
        self.a == T::lit(0.5)
    }

    /// `log L(t)` for `t > 0`, without argument checks.
    #[inline]
    pub(crate) fn log_l_unchecked(&self, t: T) -> T {
        match &self.family {
            // (t/(1+t))^(α+β) = (1 + 1/t)^-(α+β)
            KernelFamily::Tpbn { alpha, beta } => -(*alpha + *beta) * t.recip().ln_1p(),
            KernelFamily::InverseGamma { .. } => -t.recip(),
            KernelFamily::Custom(f) => f(t),
        }
    }

    pub fn log_l(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return domain(format!("L(t) requires t > 0, got {t}"));
        }
        Ok(self.log_l_unchecked(t))
    }

    /// `L(t)`.
    pub fn eval_l(&self, t: T) -> Result<T> {
        self.log_l(t).map(T::exp)
    }

    /// Documented `(M, c0, t0)` certificate for the built-in families.
    pub fn declared_bounds(&self) -> Option<(T, T, T)> {
        match self.family {
            // L increasing in t with limit 1.
            KernelFamily::Tpbn { alpha, beta } => {
                Some((T::one(), T::lit(0.5).powf(alpha + beta), T::one()))
            }
            KernelFamily::InverseGamma { .. } => Some((T::one(), (-T::one()).exp(), T::one())),
            KernelFamily::Custom(_) => None,
        }
    }

    /// Exact sampler for `lambda^2`, when the family has one.
    pub fn sampler(&self) -> Result<LocalScaleSampler> {
        match self.family {
            KernelFamily::Tpbn { alpha, beta } => {
                let (alpha, beta) = (alpha.as_f64(), beta.as_f64());
                if alpha == 0.5 && beta == 0.5 {
                    Ok(LocalScaleSampler::HalfCauchySquared)
                } else {
                    Ok(LocalScaleSampler::BetaPrime {
                        numerator: Gamma::new(beta, 1.0).map_err(|e| Error::Domain(e.to_string()))?,
                        denominator: Gamma::new(alpha, 1.0).map_err(|e| Error::Domain(e.to_string()))?,
                    })
                }
            }
            KernelFamily::InverseGamma { shape } => Ok(LocalScaleSampler::InverseGamma(
                Gamma::new(shape.as_f64(), 1.0).map_err(|e| Error::Domain(e.to_string()))?,
            )),
            KernelFamily::Custom(_) => Err(Error::UnsupportedKernel(self.name.clone())),
        }
    }
}

/// Direct sampler for the local variance `lambda^2`.
#[derive(Debug, Clone, Copy)]
pub enum LocalScaleSampler {
    /// `lambda = |tan(pi (U - 1/2))|`, a half-Cauchy scale.
    HalfCauchySquared,
    /// Ratio of independent gammas `G_beta / G_alpha`.
    BetaPrime { numerator: Gamma<f64>, denominator: Gamma<f64> },
    /// Reciprocal of `Gamma(shape, 1)`.
    InverseGamma(Gamma<f64>),
}

impl LocalScaleSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LocalScaleSampler::HalfCauchySquared => {
                let u: f64 = rng.random();
                let lambda = (std::f64::consts::PI * (u - 0.5)).tan();
                lambda * lambda
            }
            LocalScaleSampler::BetaPrime { numerator, denominator } => {
                numerator.sample(rng) / denominator.sample(rng)
            }
            LocalScaleSampler::InverseGamma(g) => g.sample(rng).recip(),
        }
    }
}

/// Numerical certificate for the boundedness conditions on `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValidationReport {
    pub sup_l_on_grid: f64,
    pub min_l_tail_on_grid: f64,
    pub declared_m: f64,
    pub declared_c0: f64,
    pub declared_t0: f64,
    pub passed: bool,
}

/// 400 log-spaced points on `[1e-8, 1e8]`.
pub fn default_validation_grid<T: Real>() -> Vec<T> {
    log_grid(T::lit(1e-8), T::lit(1e8), 400)
}

pub(crate) fn log_grid<T: Real>(lo: T, hi: T, points: usize) -> Vec<T> {
    if points == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / T::from_usize(points - 1).unwrap();
    (0..points)
        .map(|i| {
            if i == points - 1 {
                hi
            } else if i == 0 {
                lo
            } else {
                (llo + step * T::from_usize(i).unwrap()).exp()
            }
        })
        .collect()
}

/// Checks `sup L <= M` over the grid and `L(t) >= c0` for grid points `t >= t0`.
pub fn validate_kernel<T: Real>(
    kernel: &PriorKernel<T>,
    grid: &[T],
    m: T,
    c0: T,
    t0: T,
) -> Result<KernelValidationReport> {
    if grid.is_empty() {
        return usage("validation grid is empty");
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return usage("validation grid must be sorted ascending");
    }
    let mut sup = f64::NEG_INFINITY;
    let mut tail_min = f64::INFINITY;
    let mut tail_points = 0usize;
    for &t in grid {
        let l = kernel.eval_l(t)?.as_f64();
        sup = sup.max(l);
        if t >= t0 {
            tail_min = tail_min.min(l);
            tail_points += 1;
        }
    }
    if tail_points == 0 {
        return usage(format!("no grid point at or above t0 = {t0}"));
    }
    let (m, c0, t0) = (m.as_f64(), c0.as_f64(), t0.as_f64());
    Ok(KernelValidationReport {
        sup_l_on_grid: sup,
        min_l_tail_on_grid: tail_min,
        declared_m: m,
        declared_c0: c0,
        declared_t0: t0,
        passed: sup <= m && tail_min >= c0,
    })
}
