//! Monte Carlo risk estimation for multiple testing rules in the sparse
//! normal means model.
//!
//! Every replicate draws its own parameter vector (signal positions and
//! signs; magnitudes are fixed by the spec) and noise from generators keyed
//! by `(seed, replicate)`, and per-replicate outcomes are reduced in
//! replicate order, so estimates do not depend on the number of threads.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bh_auto_alpha, bh_procedure, decide_ell, oracle_threshold, universal_threshold};
use crate::error::{domain, usage, Result};
use crate::kernels::PriorKernel;
use crate::rules::{AlphaN, DecisionVector, EmpiricalBayesRule, FixedTauRule, FullBayesRule, TauPrior};
use crate::shrinkage::ShrinkageEngine;
use crate::special::{compensated_sum, normal_sf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignalMode {
    /// Every signal has magnitude `sqrt(2 ln(n/q_n)) + b`.
    BetaMin(f64),
    /// Magnitudes `a_j`, one per signal.
    Varying(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignMode {
    AllPositive,
    RandomSigns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    RandomPositions,
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSpec {
    pub n: usize,
    pub q_n: usize,
    pub signal: SignalMode,
    pub signs: SignMode,
    pub placement: Placement,
}

impl ThetaSpec {
    /// Beta-min boundary configuration with random positions and signs.
    pub fn beta_min(n: usize, q_n: usize, b: f64) -> Self {
        ThetaSpec { n, q_n, signal: SignalMode::BetaMin(b), signs: SignMode::RandomSigns, placement: Placement::RandomPositions }
    }

    pub fn varying(n: usize, q_n: usize, magnitudes: Vec<f64>) -> Self {
        ThetaSpec {
            n,
            q_n,
            signal: SignalMode::Varying(magnitudes),
            signs: SignMode::RandomSigns,
            placement: Placement::RandomPositions,
        }
    }

    /// `sqrt(2 ln(n / q_n))`.
    pub fn universal_threshold(&self) -> Result<f64> {
        universal_threshold(self.n, self.q_n)
    }

    /// Signal magnitudes, validated.
    pub fn magnitudes(&self) -> Result<Vec<f64>> {
        let t = self.universal_threshold()?;
        match &self.signal {
            SignalMode::BetaMin(b) => {
                let a = t + b;
                if !(a > 0.0) || !b.is_finite() {
                    return domain(format!("signal magnitude sqrt(2 ln(n/q_n)) + b = {a} must be positive (b = {b})"));
                }
                Ok(vec![a; self.q_n])
            }
            SignalMode::Varying(a) => {
                if a.len() != self.q_n {
                    return usage(format!("varying magnitudes need q_n = {} entries, got {}", self.q_n, a.len()));
                }
                if let Some(v) = a.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return domain(format!("varying magnitudes must be positive, got {v}"));
                }
                Ok(a.clone())
            }
        }
    }

    /// Label used in result tables: the value of `b`, or `varying`.
    pub fn signal_id(&self) -> String {
        match &self.signal {
            SignalMode::BetaMin(b) => format!("{b}"),
            SignalMode::Varying(_) => "varying".to_string(),
        }
    }
}

/// `round((ln n)^delta2)`, clamped into `[1, n - 1]`.
pub fn q_n_schedule(n: usize, delta2: f64) -> Result<usize> {
    if n < 2 || !(delta2 > 0.0) {
        return usage(format!("q_n schedule needs n >= 2 and delta2 > 0, got n = {n}, delta2 = {delta2}"));
    }
    let q = (n as f64).ln().powf(delta2).round() as usize;
    Ok(q.clamp(1, n - 1))
}

/// SplitMix64 finalizer over a combined key.
pub fn derive_seed(seed: u64, index: u64, purpose: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(purpose.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_theta(spec: &ThetaSpec, seed: u64) -> Result<Vec<f64>> {
    let magnitudes = spec.magnitudes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<usize> = match spec.placement {
        Placement::Prefix => (0..spec.q_n).collect(),
        Placement::RandomPositions => sample(&mut rng, spec.n, spec.q_n).into_vec(),
    };
    let mut theta = vec![0.0; spec.n];
    for (&i, &a) in positions.iter().zip(&magnitudes) {
        theta[i] = match spec.signs {
            SignMode::AllPositive => a,
            SignMode::RandomSigns => {
                if rng.random::<bool>() {
                    a
                } else {
                    -a
                }
            }
        };
    }
    Ok(theta)
}

const NOISE_BLOCK: usize = 4096;

/// `X_i = theta_i + Z_i`; the noise for coordinate `i` comes from stream
/// `i / 4096` of a generator seeded with `seed`.
pub fn sample_data(theta: &[f64], seed: u64) -> Result<Vec<f64>> {
    if let Some(t) = theta.iter().find(|t| !t.is_finite()) {
        return domain(format!("theta must be finite, got {t}"));
    }
    let mut x = theta.to_vec();
    x.par_chunks_mut(NOISE_BLOCK).enumerate().for_each(|(block, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block as u64);
        for v in chunk {
            let z: f64 = rng.sample(StandardNormal);
            *v += z;
        }
    });
    Ok(x)
}

fn check_lengths(theta: &[f64], psi: &DecisionVector) -> Result<()> {
    if theta.len() != psi.len() {
        return usage(format!("theta has {} entries but psi has {}", theta.len(), psi.len()));
    }
    Ok(())
}

/// Counts `(false positives, false negatives, rejections, signals)`.
fn counts(theta: &[f64], psi: &[bool]) -> (usize, usize, usize, usize) {
    let mut fp = 0;
    let mut fneg = 0;
    let mut rejected = 0;
    let mut signals = 0;
    for (&t, &p) in theta.iter().zip(psi) {
        rejected += p as usize;
        if t == 0.0 {
            fp += p as usize;
        } else {
            signals += 1;
            fneg += !p as usize;
        }
    }
    (fp, fneg, rejected, signals)
}

/// False discovery and false non-discovery proportions, with `max(., 1)`
/// denominators.
pub fn fdp_fnp(theta: &[f64], psi: &DecisionVector) -> Result<(f64, f64)> {
    check_lengths(theta, psi)?;
    let (fp, fneg, rejected, signals) = counts(theta, &psi.psi);
    Ok((fp as f64 / rejected.max(1) as f64, fneg as f64 / signals.max(1) as f64))
}

/// Number of misclassified coordinates.
pub fn hamming_loss(theta: &[f64], psi: &DecisionVector) -> Result<usize> {
    check_lengths(theta, psi)?;
    let (fp, fneg, _, _) = counts(theta, &psi.psi);
    Ok(fp + fneg)
}

/// A rule applied to one data vector.
pub trait Procedure: Send + Sync {
    fn id(&self) -> &str;
    fn decide(&self, data: &[f64]) -> Result<DecisionVector>;
}

/// Outcome of one Monte Carlo replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub fdp: f64,
    pub fnp: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryTargets {
    pub minimax: f64,
    pub lambda_n: f64,
}

/// `1 - Phi(b)` for beta-min specs; `(1/q_n) sum_j (1 - Phi(a_j - a*_n))` with
/// `a*_n = sqrt(2 ln(n/q_n))` for varying ones.
pub fn theory_targets(spec: &ThetaSpec) -> Result<TheoryTargets> {
    let t = spec.universal_threshold()?;
    spec.magnitudes()?;
    let value = match &spec.signal {
        SignalMode::BetaMin(b) => normal_sf(*b),
        SignalMode::Varying(a) => compensated_sum(a.iter().map(|&v| normal_sf(v - t))) / a.len() as f64,
    };
    Ok(TheoryTargets { minimax: value, lambda_n: value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub rule_id: String,
    pub n: usize,
    pub q_n: usize,
    pub signal_id: String,
    pub replicates: usize,
    pub fdr: f64,
    pub se_fdr: f64,
    pub fnr: f64,
    pub se_fnr: f64,
    pub risk: f64,
    pub se_risk: f64,
    pub hamming_normalized: f64,
    pub se_hamming: f64,
    /// Mean false positives per replicate, divided by `q_n`.
    pub false_positive_rate_q: f64,
    /// Mean false negatives per replicate, divided by `q_n`.
    pub false_negative_rate_q: f64,
    pub target: f64,
    pub seed: u64,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
}

/// Runs `replicates` independent replicates, returned in replicate order.
pub fn simulate_replicates<P: Procedure + ?Sized>(
    procedure: &P,
    spec: &ThetaSpec,
    replicates: usize,
    seed: u64,
) -> Result<Vec<ReplicateOutcome>> {
    spec.magnitudes()?;
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let theta = generate_theta(spec, derive_seed(seed, r, 0))?;
            let data = sample_data(&theta, derive_seed(seed, r, 1))?;
            let psi = procedure.decide(&data)?;
            if psi.len() != data.len() {
                return usage(format!("rule {} returned {} decisions for {} observations", procedure.id(), psi.len(), data.len()));
            }
            let (fp, fneg, rejected, signals) = counts(&theta, &psi.psi);
            Ok(ReplicateOutcome {
                fdp: fp as f64 / rejected.max(1) as f64,
                fnp: fneg as f64 / signals.max(1) as f64,
                false_positives: fp,
                false_negatives: fneg,
                tau: psi.meta.tau,
            })
        })
        .collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / r;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Summary of replicate outcomes.
pub fn summarize(
    rule_id: &str,
    spec: &ThetaSpec,
    outcomes: &[ReplicateOutcome],
    seed: u64,
) -> Result<RiskEstimate> {
    if outcomes.len() < 2 {
        return usage("need at least two replicates to summarize");
    }
    let q = spec.q_n as f64;
    let fdp: Vec<f64> = outcomes.iter().map(|o| o.fdp).collect();
    let fnp: Vec<f64> = outcomes.iter().map(|o| o.fnp).collect();
    let both: Vec<f64> = outcomes.iter().map(|o| o.fdp + o.fnp).collect();
    let ham: Vec<f64> = outcomes.iter().map(|o| (o.false_positives + o.false_negatives) as f64 / q).collect();
    let fp: Vec<f64> = outcomes.iter().map(|o| o.false_positives as f64 / q).collect();
    let fneg: Vec<f64> = outcomes.iter().map(|o| o.false_negatives as f64 / q).collect();
    let (fdr, se_fdr) = mean_and_se(&fdp);
    let (fnr, se_fnr) = mean_and_se(&fnp);
    let (_, se_risk) = mean_and_se(&both);
    let (hamming_normalized, se_hamming) = mean_and_se(&ham);
    let taus: Vec<f64> = outcomes.iter().filter_map(|o| o.tau).collect();
    let (tau_min, tau_max) = if taus.is_empty() {
        (None, None)
    } else {
        (
            Some(taus.iter().copied().fold(f64::INFINITY, f64::min)),
            Some(taus.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        )
    };
    Ok(RiskEstimate {
        rule_id: rule_id.to_string(),
        n: spec.n,
        q_n: spec.q_n,
        signal_id: spec.signal_id(),
        replicates: outcomes.len(),
        fdr,
        se_fdr,
        fnr,
        se_fnr,
        risk: fdr + fnr,
        se_risk,
        hamming_normalized,
        se_hamming,
        false_positive_rate_q: compensated_sum(fp) / outcomes.len() as f64,
        false_negative_rate_q: compensated_sum(fneg) / outcomes.len() as f64,
        target: theory_targets(spec)?.minimax,
        seed,
        tau_min,
        tau_max,
    })
}

/// Monte Carlo estimate of FDR, FNR, their sum and the normalized Hamming
/// risk of `procedure` for parameters drawn from `spec`.
pub fn estimate_risk<P: Procedure + ?Sized>(
    procedure: &P,
    spec: &ThetaSpec,
    replicates: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if replicates < 100 {
        return usage(format!("need at least 100 replicates, got {replicates}"));
    }
    let outcomes = simulate_replicates(procedure, spec, replicates, seed)?;
    summarize(procedure.id(), spec, &outcomes, seed)
}

/// Parsed rule descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleDescriptor {
    /// `fixed:TAU` or `fixed:auto` (`tau = C q_n / n`).
    Fixed { tau: Option<f64>, kernel: Option<String> },
    /// `eb` or `eb:C1:C2`.
    EmpiricalBayes { c1: f64, c2: f64, kernel: Option<String> },
    /// `fb` or `fb:DELTA3:GRID`.
    FullBayes { delta3: f64, grid_size: usize, kernel: Option<String> },
    /// `bh:ALPHA` or `bh:auto` (`alpha = 1 / ln n`).
    Bh { alpha: Option<f64> },
    Oracle,
    /// `ell` or `ell:T`.
    Ell { t: f64 },
}

fn parse_number(token: &str, field: &str, full: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| crate::Error::Usage(format!("bad {field} `{token}` in rule descriptor `{full}`")))
}

impl RuleDescriptor {
    /// Shrinkage rules accept an `@KERNEL` suffix, e.g. `fixed:auto@tpbn:1:1`.
    pub fn parse(descriptor: &str) -> Result<Self> {
        let (body, kernel) = match descriptor.split_once('@') {
            Some((b, k)) => {
                PriorKernel::<f64>::parse(k)?;
                (b, Some(k.to_string()))
            }
            None => (descriptor, None),
        };
        let parts: Vec<&str> = body.split(':').collect();
        let bad = || crate::Error::Usage(format!("unknown rule descriptor `{descriptor}`"));
        let no_kernel = |d: RuleDescriptor| if kernel.is_some() { Err(bad()) } else { Ok(d) };
        match parts.as_slice() {
            ["fixed", "auto"] => Ok(RuleDescriptor::Fixed { tau: None, kernel }),
            ["fixed", t] => Ok(RuleDescriptor::Fixed { tau: Some(parse_number(t, "tau", descriptor)?), kernel }),
            ["eb"] => Ok(RuleDescriptor::EmpiricalBayes { c1: 2.0, c2: 1.0, kernel }),
            ["eb", c1, c2] => Ok(RuleDescriptor::EmpiricalBayes {
                c1: parse_number(c1, "c1", descriptor)?,
                c2: parse_number(c2, "c2", descriptor)?,
                kernel,
            }),
            ["fb"] => Ok(RuleDescriptor::FullBayes { delta3: 0.3, grid_size: 64, kernel }),
            ["fb", d, g] => Ok(RuleDescriptor::FullBayes {
                delta3: parse_number(d, "delta3", descriptor)?,
                grid_size: g.parse().map_err(|_| bad())?,
                kernel,
            }),
            ["bh", "auto"] => no_kernel(RuleDescriptor::Bh { alpha: None }),
            ["bh", a] => no_kernel(RuleDescriptor::Bh { alpha: Some(parse_number(a, "alpha", descriptor)?) }),
            ["oracle"] => no_kernel(RuleDescriptor::Oracle),
            ["ell"] => no_kernel(RuleDescriptor::Ell { t: 0.5 }),
            ["ell", t] => no_kernel(RuleDescriptor::Ell { t: parse_number(t, "t", descriptor)? }),
            _ => Err(bad()),
        }
    }

    /// Builds the rule for sample size `n` and sparsity `q_n`. `default_kernel`
    /// is used when the descriptor carries none; `tau_c` is the constant in
    /// `fixed:auto`.
    pub fn build(
        &self,
        id: &str,
        n: usize,
        q_n: usize,
        default_kernel: &PriorKernel<f64>,
        tau_c: f64,
    ) -> Result<Box<dyn Procedure>> {
        universal_threshold(n, q_n)?;
        let kernel = |k: &Option<String>| -> Result<PriorKernel<f64>> {
            match k {
                Some(s) => PriorKernel::parse(s),
                None => Ok(default_kernel.clone()),
            }
        };
        let id = id.to_string();
        Ok(match self {
            RuleDescriptor::Fixed { tau, kernel: k } => {
                let tau = tau.unwrap_or(tau_c * q_n as f64 / n as f64);
                let rule = FixedTauRule::new(ShrinkageEngine::new(kernel(k)?), tau, 0.5)?;
                Box::new(Named { id, inner: move |x: &[f64]| rule.decide(x) })
            }
            RuleDescriptor::EmpiricalBayes { c1, c2, kernel: k } => {
                let rule = EmpiricalBayesRule::new(ShrinkageEngine::new(kernel(k)?), *c1, *c2, 0.5)?;
                Box::new(Named { id, inner: move |x: &[f64]| rule.decide(x) })
            }
            RuleDescriptor::FullBayes { delta3, grid_size, kernel: k } => {
                let rule = FullBayesRule::new(
                    ShrinkageEngine::new(kernel(k)?),
                    n,
                    TauPrior::Uniform,
                    AlphaN::LogPower(*delta3),
                    *grid_size,
                    0.5,
                )?;
                Box::new(Named { id, inner: move |x: &[f64]| rule.decide(x) })
            }
            RuleDescriptor::Bh { alpha } => {
                let alpha = alpha.unwrap_or_else(|| bh_auto_alpha(n));
                if !(alpha > 0.0 && alpha < 1.0) {
                    return domain(format!("alpha must lie in (0, 1), got {alpha}"));
                }
                Box::new(Named { id, inner: move |x: &[f64]| bh_procedure(x, alpha) })
            }
            RuleDescriptor::Oracle => Box::new(Named { id, inner: move |x: &[f64]| oracle_threshold(x, q_n) }),
            RuleDescriptor::Ell { t } => {
                crate::rules::check_threshold(*t)?;
                let t = *t;
                Box::new(Named { id, inner: move |x: &[f64]| decide_ell(x, t) })
            }
        })
    }
}

/// Closure-backed [`Procedure`].
pub struct Named<F> {
    pub id: String,
    pub inner: F,
}

impl<F> Procedure for Named<F>
where
    F: Fn(&[f64]) -> Result<DecisionVector> + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn decide(&self, data: &[f64]) -> Result<DecisionVector> {
        (self.inner)(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::special::normal_cdf;

    fn dv(psi: &[u8]) -> DecisionVector {
        DecisionVector::new(psi.iter().map(|&v| v == 1).collect())
    }

    #[test]
    fn theta_examples() {
        let spec = ThetaSpec { placement: Placement::Prefix, signs: SignMode::AllPositive, ..ThetaSpec::beta_min(100, 10, 0.0) };
        let theta = generate_theta(&spec, 1).unwrap();
        let t = (2.0 * 10f64.ln()).sqrt();
        assert!(theta[..10].iter().all(|&v| v == t));
        assert!(theta[10..].iter().all(|&v| v == 0.0));
        assert!((t - 2.1460).abs() < 1e-4);
        assert!(matches!(generate_theta(&ThetaSpec::beta_min(100, 10, -10.0), 1), Err(Error::Domain(_))));
        let random = ThetaSpec::beta_min(1000, 17, 1.0);
        let a = generate_theta(&random, 9).unwrap();
        assert_eq!(a, generate_theta(&random, 9).unwrap());
        assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 17);
        assert!(a.iter().all(|v| *v == 0.0 || (v.abs() - (t_for(1000, 17) + 1.0)).abs() < 1e-15));
        assert!(matches!(generate_theta(&ThetaSpec::beta_min(10, 10, 0.0), 1), Err(Error::Usage(_))));
        assert!(matches!(generate_theta(&ThetaSpec::varying(10, 2, vec![1.0]), 1), Err(Error::Usage(_))));
        assert!(matches!(generate_theta(&ThetaSpec::varying(10, 2, vec![1.0, -1.0]), 1), Err(Error::Domain(_))));
    }

    fn t_for(n: usize, q: usize) -> f64 {
        (2.0 * (n as f64 / q as f64).ln()).sqrt()
    }

    #[test]
    fn noise_moments() {
        let x = sample_data(&vec![0.0; 1_000_000], 3).unwrap();
        let n = x.len() as f64;
        let mean = compensated_sum(x.iter().copied()) / n;
        let var = compensated_sum(x.iter().map(|v| v * v)) / n - mean * mean;
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn noise_independent_of_thread_count() {
        let theta = vec![0.5; 20_000];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sample_data(&theta, 77).unwrap());
        let b = four.install(|| sample_data(&theta, 77).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, sample_data(&theta, 78).unwrap());
    }

    #[test]
    fn fdp_fnp_conventions() {
        assert_eq!(fdp_fnp(&[0.0, 2.0, 0.0], &dv(&[1, 1, 0])).unwrap(), (0.5, 0.0));
        assert_eq!(fdp_fnp(&[0.0, 2.0, 0.0], &dv(&[0, 0, 0])).unwrap(), (0.0, 1.0));
        assert_eq!(fdp_fnp(&[0.0, 0.0], &dv(&[0, 0])).unwrap(), (0.0, 0.0));
        assert!(matches!(fdp_fnp(&[0.0], &dv(&[0, 0])), Err(Error::Usage(_))));
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_loss(&[0.0, 2.0, 0.0, 3.0], &dv(&[1, 1, 0, 0])).unwrap(), 2);
        assert_eq!(hamming_loss(&[0.0, 2.0, 0.0, -3.0], &dv(&[0, 1, 0, 1])).unwrap(), 0);
        assert_eq!(hamming_loss(&[0.0; 5], &dv(&[1; 5])).unwrap(), 5);
        assert!(matches!(hamming_loss(&[0.0], &dv(&[])), Err(Error::Usage(_))));
    }

    #[test]
    fn targets() {
        assert_eq!(theory_targets(&ThetaSpec::beta_min(100, 10, 0.0)).unwrap().minimax, 0.5);
        let t1 = theory_targets(&ThetaSpec::beta_min(100, 10, 1.0)).unwrap();
        assert!((t1.minimax - 0.158655).abs() < 1e-6);
        assert_eq!(t1.minimax, t1.lambda_n);
        let a = t_for(100, 4) + 1.0;
        let v = theory_targets(&ThetaSpec::varying(100, 4, vec![a; 4])).unwrap();
        assert!((v.lambda_n - (1.0 - normal_cdf(1.0))).abs() < 1e-15);
    }

    #[test]
    fn schedule() {
        assert_eq!(q_n_schedule(20_000, 1.5).unwrap(), 31);
        assert_eq!(q_n_schedule(3, 0.1).unwrap(), 1);
        assert!(q_n_schedule(1, 1.5).is_err());
    }

    struct RejectAll;

    impl Procedure for RejectAll {
        fn id(&self) -> &str {
            "reject-all"
        }

        fn decide(&self, data: &[f64]) -> Result<DecisionVector> {
            Ok(DecisionVector::new(vec![true; data.len()]))
        }
    }

    #[test]
    fn always_reject_rule() {
        let spec = ThetaSpec::beta_min(200, 8, 0.0);
        let est = estimate_risk(&RejectAll, &spec, 100, 4).unwrap();
        assert_eq!(est.fdr, 192.0 / 200.0);
        assert_eq!(est.fnr, 0.0);
        assert_eq!(est.risk, est.fdr + est.fnr);
        assert!(matches!(estimate_risk(&RejectAll, &spec, 10, 4), Err(Error::Usage(_))));
    }

    #[test]
    fn oracle_fnr_matches_closed_form() {
        let (n, q, b) = (2000, 12, 0.5);
        let spec = ThetaSpec::beta_min(n, q, b);
        let rule = RuleDescriptor::Oracle.build("oracle", n, q, &PriorKernel::horseshoe(), 1.0).unwrap();
        let est = estimate_risk(rule.as_ref(), &spec, 400, 1).unwrap();
        let t = t_for(n, q);
        let exact = normal_cdf(-b) - normal_cdf(-2.0 * t - b);
        assert!((est.fnr - exact).abs() <= 3.0 * est.se_fnr, "{} vs {exact}", est.fnr);
        let per_null = 2.0 * normal_sf(t);
        let ham = exact + (n - q) as f64 * per_null / q as f64;
        assert!((est.hamming_normalized - ham).abs() <= 3.0 * est.se_hamming);
        assert!((est.hamming_normalized - est.false_positive_rate_q - est.false_negative_rate_q).abs() < 1e-12);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let spec = ThetaSpec::beta_min(500, 6, 1.0);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let rule = RuleDescriptor::parse("eb").unwrap().build("eb", 500, 6, &PriorKernel::horseshoe(), 1.0).unwrap();
                estimate_risk(rule.as_ref(), &spec, 100, 12).unwrap()
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn descriptors() {
        assert_eq!(RuleDescriptor::parse("fixed:auto").unwrap(), RuleDescriptor::Fixed { tau: None, kernel: None });
        assert_eq!(RuleDescriptor::parse("fixed:0.01").unwrap(), RuleDescriptor::Fixed { tau: Some(0.01), kernel: None });
        assert_eq!(
            RuleDescriptor::parse("fixed:auto@tpbn:1:1").unwrap(),
            RuleDescriptor::Fixed { tau: None, kernel: Some("tpbn:1:1".into()) }
        );
        assert_eq!(RuleDescriptor::parse("eb").unwrap(), RuleDescriptor::EmpiricalBayes { c1: 2.0, c2: 1.0, kernel: None });
        assert_eq!(RuleDescriptor::parse("fb:0.5:32").unwrap(), RuleDescriptor::FullBayes { delta3: 0.5, grid_size: 32, kernel: None });
        assert_eq!(RuleDescriptor::parse("bh:auto").unwrap(), RuleDescriptor::Bh { alpha: None });
        assert_eq!(RuleDescriptor::parse("bh:0.1").unwrap(), RuleDescriptor::Bh { alpha: Some(0.1) });
        assert_eq!(RuleDescriptor::parse("oracle").unwrap(), RuleDescriptor::Oracle);
        assert_eq!(RuleDescriptor::parse("ell:0.3").unwrap(), RuleDescriptor::Ell { t: 0.3 });
        for bad in ["nonsense", "fixed", "bh:x", "oracle@horseshoe", "fixed:auto@cauchy", "fb:0.3", ""] {
            assert!(matches!(RuleDescriptor::parse(bad), Err(Error::Usage(_)) | Err(Error::UnsupportedKernel(_))), "{bad}");
        }
        let k = PriorKernel::horseshoe();
        assert!(RuleDescriptor::parse("bh:1.5").unwrap().build("x", 100, 5, &k, 1.0).is_err());
        assert!(RuleDescriptor::parse("fixed:2").unwrap().build("x", 100, 5, &k, 1.0).is_err());
        assert!(RuleDescriptor::parse("eb:1:1").unwrap().build("x", 100, 5, &k, 1.0).is_err());
    }
}
