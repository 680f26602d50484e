//! Bayesian multiple testing for the sparse normal means model with
//! global-local shrinkage priors, together with a Monte Carlo laboratory for
//! the FDR + FNR and Hamming risks of these rules and of classical baselines.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`. The
//! risk lab and the command line driver work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod baselines;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod quadrature;
pub mod risk;
pub mod rules;
pub mod scalar;
pub mod shrinkage;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Kernel = kernels::PriorKernel<f64>;
pub type Engine = shrinkage::ShrinkageEngine<f64>;
pub type Quadrature = quadrature::QuadratureConfig<f64>;
pub type FixedTau = rules::FixedTauRule<f64>;
pub type EmpiricalBayes = rules::EmpiricalBayesRule<f64>;
pub type FullBayes = rules::FullBayesRule<f64>;
pub type RuleSpec = rules::DecisionRuleSpec<f64>;
