//! One-group multiple testing rules: reject `H_0i` when the posterior mean of
//! `1 - kappa_i` exceeds a threshold (1/2 by default), with the global scale
//! fixed, estimated from the data, or integrated against a prior.
//!
//! Every rule here thresholds a function of `|x|` that is non-decreasing, so a
//! rule first brackets the crossing point `[below, above]` and only evaluates
//! the posterior mean directly for observations inside the bracket. Outside
//! it the decision follows from monotonicity, which makes large data vectors
//! cheap without changing any decision.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Result};
use crate::kernels::{log_grid, PriorKernel};
use crate::scalar::Real;
use crate::shrinkage::{check_tau, ShrinkageEngine};

/// Rejection indicators for one dataset plus the realized hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionVector {
    pub psi: Vec<bool>,
    pub meta: RuleMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RuleMeta {
    /// Global scale actually used (fixed or estimated).
    pub tau: Option<f64>,
    /// Estimated non-null proportion (l-value rule).
    pub p_hat: Option<f64>,
    /// Number of rejections made by a step-up procedure.
    pub step_up_k: Option<usize>,
}

impl DecisionVector {
    pub fn new(psi: Vec<bool>) -> Self {
        DecisionVector { psi, meta: RuleMeta::default() }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn rejections(&self) -> usize {
        self.psi.iter().filter(|&&p| p).count()
    }
}

pub(crate) fn check_threshold<T: Real>(threshold: T) -> Result<()> {
    if threshold > T::zero() && threshold < T::one() {
        Ok(())
    } else {
        domain(format!("threshold must lie in (0, 1), got {threshold}"))
    }
}

/// Bracket of the crossing point of a non-decreasing function of `|x|`:
/// `F(below) <= threshold < F(above)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary<T> {
    pub below: T,
    pub above: T,
}

impl<T: Real> Boundary<T> {
    /// `Some(decision)` when monotonicity settles it, `None` inside the bracket.
    #[inline]
    pub fn classify(&self, abs_x: T) -> Option<bool> {
        if abs_x <= self.below {
            Some(false)
        } else if abs_x >= self.above {
            Some(true)
        } else {
            None
        }
    }

    /// Brackets the crossing by doubling then bisection down to `width`.
    /// Searches `|x| <= x_cap`; beyond the cap nothing is classified.
    pub fn bracket<F>(f: F, threshold: T, x_cap: T, width: T) -> Result<Self>
    where
        F: Fn(T) -> Result<T>,
    {
        if f(T::zero())? > threshold {
            return Ok(Boundary { below: -T::one(), above: T::zero() });
        }
        let mut lo = T::zero();
        let mut hi = T::one();
        loop {
            if f(hi)? > threshold {
                break;
            }
            lo = hi;
            if hi >= x_cap {
                return Ok(Boundary { below: lo, above: T::infinity() });
            }
            hi = (hi + hi).min(x_cap);
        }
        while hi - lo > width {
            let mid = T::lit(0.5) * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            if f(mid)? > threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Boundary { below: lo, above: hi })
    }
}

const X_CAP: f64 = 64.0;
const BRACKET_WIDTH: f64 = 1e-7;
/// Below this many observations every coordinate is evaluated directly.
const DIRECT_LIMIT: usize = 32;

/// Applies `boundary` and falls back to `exact` for the undecided coordinates.
fn decide_with_boundary<T, F>(data: &[T], threshold: T, boundary: Option<&Boundary<T>>, exact: F) -> Result<Vec<bool>>
where
    T: Real,
    F: Fn(T) -> Result<T> + Sync,
{
    data.par_iter()
        .map(|&x| {
            if !x.is_finite() {
                return domain(format!("observation must be finite, got {x}"));
            }
            match boundary.and_then(|b| b.classify(x.abs())) {
                Some(d) => Ok(d),
                None => Ok(exact(x)? > threshold),
            }
        })
        .collect()
}

/// Fixed global scale rule.
#[derive(Debug)]
pub struct FixedTauRule<T> {
    engine: ShrinkageEngine<T>,
    tau: T,
    threshold: T,
    boundary: OnceLock<Boundary<T>>,
}

impl<T: Real> FixedTauRule<T> {
    pub fn new(engine: ShrinkageEngine<T>, tau: T, threshold: T) -> Result<Self> {
        check_tau(tau)?;
        check_threshold(threshold)?;
        Ok(FixedTauRule { engine, tau, threshold, boundary: OnceLock::new() })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn boundary(&self) -> Result<Boundary<T>> {
        if let Some(b) = self.boundary.get() {
            return Ok(*b);
        }
        let b = Boundary::bracket(
            |x| self.engine.e_one_minus_kappa(x, self.tau),
            self.threshold,
            T::lit(X_CAP),
            T::lit(BRACKET_WIDTH),
        )?;
        Ok(*self.boundary.get_or_init(|| b))
    }

    pub fn decide(&self, data: &[T]) -> Result<DecisionVector> {
        let boundary = if data.len() > DIRECT_LIMIT { Some(self.boundary()?) } else { None };
        let psi = decide_with_boundary(data, self.threshold, boundary.as_ref(), |x| {
            self.engine.e_one_minus_kappa(x, self.tau)
        })?;
        Ok(DecisionVector { psi, meta: RuleMeta { tau: Some(self.tau.as_f64()), ..Default::default() } })
    }
}

/// `psi_i = 1{E(1 - kappa_i | x_i, tau) > threshold}`.
pub fn decide_fixed_tau<T: Real>(data: &[T], kernel: &PriorKernel<T>, tau: T, threshold: T) -> Result<DecisionVector> {
    FixedTauRule::new(ShrinkageEngine::new(kernel.clone()), tau, threshold)?.decide(data)
}

fn check_eb_constants<T: Real>(c1: T, c2: T) -> Result<()> {
    if !(c1 >= T::lit(2.0)) || !(c2 >= T::one()) {
        return domain(format!("empirical Bayes constants need c1 >= 2 and c2 >= 1, got ({c1}, {c2})"));
    }
    Ok(())
}

/// `max{1/n, #{|x_i| > sqrt(c1 ln n)} / (c2 n)}`.
pub fn estimate_tau_eb<T: Real>(data: &[T], c1: T, c2: T) -> Result<T> {
    let n = data.len();
    if n < 2 {
        return usage(format!("empirical Bayes estimate needs n >= 2, got {n}"));
    }
    check_eb_constants(c1, c2)?;
    let nt = T::from_usize(n).unwrap();
    let cut = (c1 * nt.ln()).sqrt();
    let count = data.iter().filter(|x| x.abs() > cut).count();
    let est = T::from_usize(count).unwrap() / (c2 * nt);
    Ok(est.max(nt.recip()))
}

/// Plug-in rule with the global scale replaced by [`estimate_tau_eb`].
/// Boundaries are cached per realized scale.
#[derive(Debug)]
pub struct EmpiricalBayesRule<T> {
    engine: ShrinkageEngine<T>,
    c1: T,
    c2: T,
    threshold: T,
    cache: Mutex<HashMap<u64, Boundary<T>>>,
}

impl<T: Real> EmpiricalBayesRule<T> {
    pub fn new(engine: ShrinkageEngine<T>, c1: T, c2: T, threshold: T) -> Result<Self> {
        check_eb_constants(c1, c2)?;
        check_threshold(threshold)?;
        Ok(EmpiricalBayesRule { engine, c1, c2, threshold, cache: Mutex::new(HashMap::new()) })
    }

    fn boundary(&self, tau: T) -> Result<Boundary<T>> {
        let key = tau.as_f64().to_bits();
        if let Some(b) = self.cache.lock().unwrap().get(&key) {
            return Ok(*b);
        }
        let b = Boundary::bracket(
            |x| self.engine.e_one_minus_kappa(x, tau),
            self.threshold,
            T::lit(X_CAP),
            T::lit(BRACKET_WIDTH),
        )?;
        self.cache.lock().unwrap().insert(key, b);
        Ok(b)
    }

    pub fn decide(&self, data: &[T]) -> Result<DecisionVector> {
        let tau = estimate_tau_eb(data, self.c1, self.c2)?;
        let boundary = if data.len() > DIRECT_LIMIT { Some(self.boundary(tau)?) } else { None };
        let psi = decide_with_boundary(data, self.threshold, boundary.as_ref(), |x| {
            self.engine.e_one_minus_kappa(x, tau)
        })?;
        Ok(DecisionVector { psi, meta: RuleMeta { tau: Some(tau.as_f64()), ..Default::default() } })
    }
}

pub fn decide_eb<T: Real>(data: &[T], kernel: &PriorKernel<T>, c1: T, c2: T, threshold: T) -> Result<DecisionVector> {
    EmpiricalBayesRule::new(ShrinkageEngine::new(kernel.clone()), c1, c2, threshold)?.decide(data)
}

/// Prior density for the global scale on `[1/n, alpha_n]`.
#[derive(Clone)]
pub enum TauPrior<T> {
    Uniform,
    /// A density, assumed to integrate to one over the support.
    Density(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> TauPrior<T> {
    fn density(&self, tau: T, lower: T, upper: T) -> T {
        match self {
            TauPrior::Uniform => (upper - lower).recip(),
            TauPrior::Density(f) => f(tau),
        }
    }
}

impl<T> std::fmt::Debug for TauPrior<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TauPrior::Uniform => write!(f, "Uniform"),
            TauPrior::Density(_) => write!(f, "Density(..)"),
        }
    }
}

/// Discrete posterior over a grid of global scales.
#[derive(Debug, Clone, PartialEq)]
pub struct TauPosterior<T> {
    pub grid: Vec<T>,
    pub weights: Vec<T>,
}

/// `log`-spaced grid and trapezoidal cell widths.
fn trapezoid_grid<T: Real>(lower: T, upper: T, grid_size: usize) -> (Vec<T>, Vec<T>) {
    let grid = log_grid(lower, upper, grid_size);
    let half = T::lit(0.5);
    let widths = (0..grid_size)
        .map(|g| {
            let left = if g == 0 { grid[0] } else { grid[g - 1] };
            let right = if g + 1 == grid_size { grid[g] } else { grid[g + 1] };
            half * (right - left)
        })
        .collect();
    (grid, widths)
}

fn check_tau_grid<T: Real>(lower: T, upper: T, grid_size: usize) -> Result<()> {
    if grid_size < 16 {
        return usage(format!("tau grid needs at least 16 points, got {grid_size}"));
    }
    if !(lower > T::zero() && lower < upper && upper <= T::one()) {
        return usage(format!("degenerate tau support [{lower}, {upper}]"));
    }
    Ok(())
}

fn normalize_log_weights<T: Real>(log_w: &[T]) -> Vec<T> {
    let m = log_w.iter().copied().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = log_w.iter().map(|&l| (l - m).exp()).collect();
    let s: T = w.iter().copied().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// `pi(tau | X) ∝ pi(tau) prod_i m(x_i | tau)` on a log grid over
/// `[lower, upper]`, each point weighted by its trapezoidal cell width.
/// Marginals come from direct quadrature at every distinct `|x_i|`.
pub fn tau_posterior_weights<T: Real>(
    data: &[T],
    engine: &ShrinkageEngine<T>,
    tau_prior: &TauPrior<T>,
    lower: T,
    upper: T,
    grid_size: usize,
) -> Result<TauPosterior<T>> {
    check_tau_grid(lower, upper, grid_size)?;
    let (grid, widths) = trapezoid_grid(lower, upper, grid_size);
    let mut abs: Vec<T> = data.iter().map(|x| x.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).expect("finite data"));
    let mut distinct: Vec<(T, usize)> = Vec::new();
    for x in abs {
        match distinct.last_mut() {
            Some((v, c)) if *v == x => *c += 1,
            _ => distinct.push((x, 1)),
        }
    }
    let log_w: Vec<T> = grid
        .par_iter()
        .zip(widths.par_iter())
        .map(|(&tau, &width)| {
            let mut ll = T::zero();
            for &(x, count) in &distinct {
                ll = ll + T::from_usize(count).unwrap() * engine.integrals(x, tau)?.log_marginal;
            }
            Ok(ll + (tau_prior.density(tau, lower, upper) * width).ln())
        })
        .collect::<Result<_>>()?;
    Ok(TauPosterior { grid, weights: normalize_log_weights(&log_w) })
}

/// `alpha_n` for the full Bayes support `[1/n, alpha_n]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaN<T> {
    Value(T),
    /// `(ln n)^delta3 / n`
    LogPower(T),
}

impl<T: Real> AlphaN<T> {
    pub fn resolve(&self, n: usize) -> T {
        let nt = T::from_usize(n).unwrap();
        match *self {
            AlphaN::Value(v) => v,
            AlphaN::LogPower(d) => nt.ln().powf(d) / nt,
        }
    }
}

const TABLE_X_MAX: f64 = 12.0;
const TABLE_STEPS_PER_UNIT: usize = 64;

/// Per-scale table of the log marginal and the posterior mean of `1 - kappa`
/// on a uniform `|x|` grid.
#[derive(Debug, Clone)]
struct ScaleTable<T> {
    log_marginal: Vec<T>,
    e_one_minus_kappa: Vec<T>,
}

/// Full Bayes rule for a fixed sample size. The grid of global scales and the
/// per-scale tables are built once; each dataset then costs a table lookup per
/// observation and scale, plus direct quadrature for the few observations
/// near the rejection boundary or beyond the tabulated range.
///
/// The log marginal is interpolated with cubic Hermite polynomials using the
/// exact derivative `d/dx ln m(x | tau) = -x E(kappa | x, tau)`.
#[derive(Debug)]
pub struct FullBayesRule<T> {
    engine: ShrinkageEngine<T>,
    n: usize,
    grid: Vec<T>,
    log_prior_mass: Vec<T>,
    threshold: T,
    step: T,
    tables: Vec<ScaleTable<T>>,
}

impl<T: Real> FullBayesRule<T> {
    /// Log-spaced grid of `grid_size` points on `[1/n, alpha_n]` with
    /// trapezoidal prior masses.
    pub fn new(
        engine: ShrinkageEngine<T>,
        n: usize,
        tau_prior: TauPrior<T>,
        alpha_n: AlphaN<T>,
        grid_size: usize,
        threshold: T,
    ) -> Result<Self> {
        if n < 2 {
            return usage(format!("full Bayes rule needs n >= 2, got {n}"));
        }
        let lower = T::from_usize(n).unwrap().recip();
        let upper = alpha_n.resolve(n);
        if !(upper > lower && upper < T::one()) {
            return domain(format!("alpha_n = {upper} must lie in (1/n, 1)"));
        }
        check_tau_grid(lower, upper, grid_size)?;
        let (grid, widths) = trapezoid_grid(lower, upper, grid_size);
        let mass = grid.iter().zip(&widths).map(|(&t, &w)| tau_prior.density(t, lower, upper) * w).collect();
        Self::from_grid(engine, n, grid, mass, threshold)
    }

    /// Arbitrary discretization: `prior_mass[g]` is the prior mass at `grid[g]`.
    pub fn from_grid(engine: ShrinkageEngine<T>, n: usize, grid: Vec<T>, prior_mass: Vec<T>, threshold: T) -> Result<Self> {
        check_threshold(threshold)?;
        if grid.is_empty() || grid.len() != prior_mass.len() {
            return usage("grid and prior masses must be non-empty and of equal length");
        }
        for &t in &grid {
            check_tau(t)?;
        }
        if prior_mass.iter().any(|m| !(*m > T::zero())) {
            return usage("prior masses must be positive");
        }
        let step = T::from_usize(TABLE_STEPS_PER_UNIT).unwrap().recip();
        let nodes = (TABLE_X_MAX as usize) * TABLE_STEPS_PER_UNIT + 1;
        let tables = grid
            .par_iter()
            .map(|&tau| {
                let mut log_marginal = Vec::with_capacity(nodes);
                let mut e_one_minus_kappa = Vec::with_capacity(nodes);
                for k in 0..nodes {
                    let r = engine.integrals(step * T::from_usize(k).unwrap(), tau)?;
                    log_marginal.push(r.log_marginal);
                    e_one_minus_kappa.push(r.e_one_minus_kappa);
                }
                Ok(ScaleTable { log_marginal, e_one_minus_kappa })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FullBayesRule {
            engine,
            n,
            grid,
            log_prior_mass: prior_mass.into_iter().map(T::ln).collect(),
            threshold,
            step,
            tables,
        })
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    fn log_marginal(&self, g: usize, x: T) -> Result<T> {
        let ax = x.abs();
        let table = &self.tables[g];
        let pos = ax / self.step;
        let k = pos.floor().to_usize().unwrap_or(usize::MAX);
        if k + 1 >= table.log_marginal.len() {
            return Ok(self.engine.integrals(ax, self.grid[g])?.log_marginal);
        }
        let s = pos - T::from_usize(k).unwrap();
        let (x0, x1) = (self.step * T::from_usize(k).unwrap(), self.step * T::from_usize(k + 1).unwrap());
        let (y0, y1) = (table.log_marginal[k], table.log_marginal[k + 1]);
        let d0 = -x0 * (T::one() - table.e_one_minus_kappa[k]);
        let d1 = -x1 * (T::one() - table.e_one_minus_kappa[k + 1]);
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        Ok(h00 * y0 + h10 * self.step * d0 + h01 * y1 + h11 * self.step * d1)
    }

    /// Posterior weights over the grid for one dataset.
    pub fn posterior(&self, data: &[T]) -> Result<TauPosterior<T>> {
        if data.len() != self.n {
            return usage(format!("rule was built for n = {}, got {} observations", self.n, data.len()));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return domain(format!("observation must be finite, got {x}"));
        }
        let log_w: Vec<T> = (0..self.grid.len())
            .into_par_iter()
            .map(|g| {
                let mut ll = T::zero();
                for &x in data {
                    ll = ll + self.log_marginal(g, x)?;
                }
                Ok(ll + self.log_prior_mass[g])
            })
            .collect::<Result<_>>()?;
        Ok(TauPosterior { grid: self.grid.clone(), weights: normalize_log_weights(&log_w) })
    }

    fn mixture_exact(&self, weights: &[T], x: T) -> Result<T> {
        let mut acc = T::zero();
        for (g, &w) in weights.iter().enumerate() {
            acc = acc + w * self.engine.e_one_minus_kappa(x, self.grid[g])?;
        }
        Ok(acc)
    }

    /// Full Bayes posterior mean of `1 - kappa_i` for every observation.
    pub fn posterior_means(&self, data: &[T]) -> Result<Vec<T>> {
        let post = self.posterior(data)?;
        data.par_iter().map(|&x| self.mixture_exact(&post.weights, x)).collect()
    }

    pub fn decide(&self, data: &[T]) -> Result<DecisionVector> {
        let post = self.posterior(data)?;
        // Mixture of non-decreasing functions; bracket on the table nodes.
        let nodes = self.tables[0].e_one_minus_kappa.len();
        let mixture_at = |k: usize| -> T {
            post.weights.iter().zip(&self.tables).map(|(&w, t)| w * t.e_one_minus_kappa[k]).sum()
        };
        let mut boundary = Boundary { below: T::lit(TABLE_X_MAX), above: T::infinity() };
        for k in 0..nodes {
            if mixture_at(k) > self.threshold {
                boundary = if k == 0 {
                    Boundary { below: -T::one(), above: T::zero() }
                } else {
                    Boundary {
                        below: self.step * T::from_usize(k - 1).unwrap(),
                        above: self.step * T::from_usize(k).unwrap(),
                    }
                };
                break;
            }
        }
        let psi = decide_with_boundary(data, self.threshold, Some(&boundary), |x| {
            self.mixture_exact(&post.weights, x)
        })?;
        let tau_mean: T = post.weights.iter().zip(&self.grid).map(|(&w, &t)| w * t).sum();
        Ok(DecisionVector { psi, meta: RuleMeta { tau: Some(tau_mean.as_f64()), ..Default::default() } })
    }
}

/// Which one-group rule, with its hyperparameters.
#[derive(Debug, Clone)]
pub enum RuleVariant<T> {
    FixedTau { tau: T },
    EmpiricalBayes { c1: T, c2: T },
    FullBayes { tau_prior: TauPrior<T>, alpha_n: AlphaN<T>, grid_size: usize },
}

/// A one-group rule: variant, kernel and threshold.
#[derive(Debug, Clone)]
pub struct DecisionRuleSpec<T> {
    pub variant: RuleVariant<T>,
    pub kernel: PriorKernel<T>,
    pub threshold: T,
}

impl<T: Real> DecisionRuleSpec<T> {
    pub fn fixed_tau(kernel: PriorKernel<T>, tau: T) -> Self {
        DecisionRuleSpec { variant: RuleVariant::FixedTau { tau }, kernel, threshold: T::lit(0.5) }
    }

    /// `c1 = 2`, `c2 = 1`.
    pub fn empirical_bayes(kernel: PriorKernel<T>) -> Self {
        DecisionRuleSpec {
            variant: RuleVariant::EmpiricalBayes { c1: T::lit(2.0), c2: T::one() },
            kernel,
            threshold: T::lit(0.5),
        }
    }

    /// Uniform prior on `[1/n, (ln n)^0.3 / n]`, 64 grid points.
    pub fn full_bayes(kernel: PriorKernel<T>) -> Self {
        DecisionRuleSpec {
            variant: RuleVariant::FullBayes {
                tau_prior: TauPrior::Uniform,
                alpha_n: AlphaN::LogPower(T::lit(0.3)),
                grid_size: 64,
            },
            kernel,
            threshold: T::lit(0.5),
        }
    }

    pub fn decide(&self, data: &[T]) -> Result<DecisionVector> {
        match &self.variant {
            RuleVariant::FixedTau { tau } => decide_fixed_tau(data, &self.kernel, *tau, self.threshold),
            RuleVariant::EmpiricalBayes { c1, c2 } => decide_eb(data, &self.kernel, *c1, *c2, self.threshold),
            RuleVariant::FullBayes { .. } => decide_fb(data, self),
        }
    }
}

/// Full Bayes decisions for a spec with the `FullBayes` variant.
pub fn decide_fb<T: Real>(data: &[T], spec: &DecisionRuleSpec<T>) -> Result<DecisionVector> {
    let RuleVariant::FullBayes { tau_prior, alpha_n, grid_size } = &spec.variant else {
        return usage("decide_fb needs a FullBayes rule spec");
    };
    FullBayesRule::new(
        ShrinkageEngine::new(spec.kernel.clone()),
        data.len(),
        tau_prior.clone(),
        *alpha_n,
        *grid_size,
        spec.threshold,
    )?
    .decide(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hs() -> PriorKernel<f64> {
        PriorKernel::horseshoe()
    }

    fn noisy(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                if i % 10 == 0 { z + 4.0 } else { z }
            })
            .collect()
    }

    #[test]
    fn fixed_tau_examples() {
        let d = decide_fixed_tau(&[0.0, 10.0], &hs(), 0.01, 0.5).unwrap();
        assert_eq!(d.psi, vec![false, true]);
        assert_eq!(d.meta.tau, Some(0.01));
        assert!(decide_fixed_tau::<f64>(&[], &hs(), 0.01, 0.5).unwrap().is_empty());
        assert!(matches!(decide_fixed_tau(&[1.0], &hs(), 0.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(decide_fixed_tau(&[1.0], &hs(), 1.5, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn strict_inequality_at_threshold() {
        let engine = ShrinkageEngine::new(hs());
        let x = 3.7;
        let v = engine.e_one_minus_kappa(x, 0.01).unwrap();
        let d = decide_fixed_tau(&[x], &hs(), 0.01, v).unwrap();
        assert_eq!(d.psi, vec![false]);
        // same with the bracketing path
        let mut data = vec![0.0; 64];
        data[5] = x;
        data[6] = -x;
        let d = decide_fixed_tau(&data, &hs(), 0.01, v).unwrap();
        assert!(!d.psi[5] && !d.psi[6]);
    }

    #[test]
    fn boundary_path_agrees_with_direct_evaluation() {
        let data = noisy(200, 11);
        let engine = ShrinkageEngine::new(hs());
        let direct: Vec<bool> = data.iter().map(|&x| engine.e_one_minus_kappa(x, 0.02).unwrap() > 0.5).collect();
        let d = decide_fixed_tau(&data, &hs(), 0.02, 0.5).unwrap();
        assert_eq!(d.psi, direct);
        assert!(d.rejections() > 0);
    }

    #[test]
    fn eb_estimate_examples() {
        let mut data = vec![0.0f64; 10];
        assert_eq!(estimate_tau_eb(&data, 2.0, 1.0).unwrap(), 0.1);
        data[3] = 2.2;
        data[7] = -5.0;
        assert!((estimate_tau_eb(&data, 2.0, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((estimate_tau_eb(&data, 2.0, 2.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(estimate_tau_eb(&[1.0], 2.0, 1.0), Err(Error::Usage(_))));
        assert!(matches!(estimate_tau_eb(&data, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(estimate_tau_eb(&data, 2.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn eb_decisions() {
        let zeros = vec![0.0; 100];
        let d = decide_eb(&zeros, &hs(), 2.0, 1.0, 0.5).unwrap();
        assert_eq!(d.meta.tau, Some(0.01));
        assert_eq!(d.rejections(), 0);
        let mut one = zeros.clone();
        one[42] = 20.0;
        let d = decide_eb(&one, &hs(), 2.0, 1.0, 0.5).unwrap();
        assert!(d.psi[42]);
        assert_eq!(d.rejections(), 1);
        let data = noisy(300, 5);
        assert_eq!(decide_eb(&data, &hs(), 2.0, 1.0, 0.5).unwrap(), decide_eb(&data, &hs(), 2.0, 1.0, 0.5).unwrap());
    }

    #[test]
    fn eb_floor_on_random_data() {
        for seed in 0..20 {
            let data = noisy(50 + seed as usize, seed);
            let tau = estimate_tau_eb(&data, 2.0, 1.0).unwrap();
            assert!(tau >= 1.0 / data.len() as f64);
        }
    }

    #[test]
    fn tau_weights_contract() {
        let engine = ShrinkageEngine::new(hs());
        assert!(matches!(
            tau_posterior_weights(&[0.0], &engine, &TauPrior::Uniform, 0.01, 0.1, 1),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            tau_posterior_weights(&[0.0], &engine, &TauPrior::Uniform, 0.1, 0.1, 16),
            Err(Error::Usage(_))
        ));
        let empty = tau_posterior_weights::<f64>(&[], &engine, &TauPrior::Uniform, 0.01, 0.1, 16).unwrap();
        let (_, widths) = trapezoid_grid(0.01, 0.1, 16);
        let total: f64 = widths.iter().sum();
        for (w, c) in empty.weights.iter().zip(&widths) {
            assert!((w - c / total).abs() < 1e-14);
        }
        let data = noisy(40, 2);
        let post = tau_posterior_weights(&data, &engine, &TauPrior::Uniform, 0.01, 0.1, 16).unwrap();
        let s: f64 = post.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(post.weights.iter().all(|&w| w >= 0.0));
        assert!(post.grid.iter().all(|&t| (0.01..=0.1).contains(&t)));
    }

    #[test]
    fn plan_weights_match_direct_quadrature() {
        let n = 60;
        let data = noisy(n, 9);
        let engine = ShrinkageEngine::new(hs());
        let rule = FullBayesRule::new(engine.clone(), n, TauPrior::Uniform, AlphaN::Value(0.2), 16, 0.5).unwrap();
        let fast = rule.posterior(&data).unwrap();
        let exact = tau_posterior_weights(&data, &engine, &TauPrior::Uniform, 1.0 / n as f64, 0.2, 16).unwrap();
        for (a, b) in fast.weights.iter().zip(&exact.weights) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn single_point_grid_matches_fixed_tau() {
        let data = noisy(120, 3);
        let engine = ShrinkageEngine::new(hs());
        let fb = FullBayesRule::from_grid(engine, data.len(), vec![0.03], vec![1.0], 0.5).unwrap();
        let fixed = decide_fixed_tau(&data, &hs(), 0.03, 0.5).unwrap();
        assert_eq!(fb.decide(&data).unwrap().psi, fixed.psi);
    }

    #[test]
    fn fb_mean_is_between_grid_extremes() {
        let n = 50;
        let data = noisy(n, 4);
        let engine = ShrinkageEngine::new(hs());
        let rule = FullBayesRule::new(engine.clone(), n, TauPrior::Uniform, AlphaN::Value(0.3), 16, 0.5).unwrap();
        let means = rule.posterior_means(&data).unwrap();
        for (&x, &m) in data.iter().zip(&means) {
            let vals: Vec<f64> = rule.grid().iter().map(|&t| engine.e_one_minus_kappa(x, t).unwrap()).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(m >= lo - 1e-15 && m <= hi + 1e-15);
        }
        let d = rule.decide(&data).unwrap();
        let by_mean: Vec<bool> = means.iter().map(|&m| m > 0.5).collect();
        assert_eq!(d.psi, by_mean);
    }

    #[test]
    fn fb_all_zero_large_n() {
        let n = 10_000;
        let spec = DecisionRuleSpec::full_bayes(hs());
        let d = decide_fb(&vec![0.0; n], &spec).unwrap();
        assert_eq!(d.rejections(), 0);
        let tau = d.meta.tau.unwrap();
        let alpha = (n as f64).ln().powf(0.3) / n as f64;
        assert!(tau >= 1.0 / n as f64 && tau <= alpha);
        assert!(matches!(decide_fb(&[0.0; 4], &DecisionRuleSpec::fixed_tau(hs(), 0.1)), Err(Error::Usage(_))));
    }

    #[test]
    fn sign_and_permutation_equivariance() {
        let data = noisy(150, 21);
        let flipped: Vec<f64> = data.iter().enumerate().map(|(i, &x)| if i % 3 == 0 { -x } else { x }).collect();
        let mut perm: Vec<usize> = (0..data.len()).collect();
        perm.reverse();
        perm.swap(3, 70);
        let permuted: Vec<f64> = perm.iter().map(|&i| data[i]).collect();
        for spec in [DecisionRuleSpec::fixed_tau(hs(), 0.02), DecisionRuleSpec::empirical_bayes(hs())] {
            let base = spec.decide(&data).unwrap();
            assert_eq!(spec.decide(&flipped).unwrap().psi, base.psi);
            let p = spec.decide(&permuted).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                assert_eq!(p.psi[j], base.psi[i]);
            }
        }
    }

    #[test]
    fn monotone_rejection_region() {
        let data = noisy(400, 8);
        let d = decide_fixed_tau(&data, &hs(), 0.005, 0.5).unwrap();
        let min_rejected = data.iter().zip(&d.psi).filter(|(_, &p)| p).map(|(x, _)| x.abs()).fold(f64::INFINITY, f64::min);
        for (x, &p) in data.iter().zip(&d.psi) {
            if x.abs() >= min_rejected {
                assert!(p);
            }
        }
    }

    #[test]
    fn threshold_validation() {
        assert!(matches!(decide_fixed_tau(&[1.0], &hs(), 0.1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(decide_fixed_tau(&[f64::NAN; 40], &hs(), 0.1, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn single_precision_rule() {
        let d = decide_fixed_tau(&[0.0f32, 10.0], &PriorKernel::horseshoe(), 0.01, 0.5).unwrap();
        assert_eq!(d.psi, vec![false, true]);
    }
}
