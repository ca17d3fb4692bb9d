//! Factor copula models for unbalanced longitudinal data.
//!
//! The crate fits 1-factor and 2-factor copula regression models to
//! longitudinal responses of continuous (Gamma, Normal), binary and
//! ordinal type via two-stage (IFM) maximum likelihood:
//!
//! 1. marginal regressions are fitted under working independence
//!    ([`marginals`]) and the fitted CDFs turn responses into uniform
//!    probability-integral-transform samples;
//! 2. exchangeable dependence parameters of the latent-factor copula are
//!    estimated by maximizing a quadrature approximation of the factor
//!    likelihood ([`factor_model`]), with Godambe (sandwich) standard
//!    errors covering both stages and AIC/BIC for model comparison.
//!
//! Supporting pieces: elliptical bivariate copula kernels with their
//! h-functions ([`bicopula`]), Gauss quadrature rules ([`quadrature`]),
//! random-intercept/-slope baselines ([`mixed`]), long-format CSV
//! ingestion ([`dataset`]) and a reproducible simulation harness with
//! Monte Carlo and model-comparison studies ([`simulator`]).
//!
//! The numeric core is generic over the scalar type (see [`Real`]);
//! `f64` aliases for the main artifacts are exported at the crate root
//! and are what the command-line front end uses.

pub mod bicopula;
pub mod dataset;
pub mod error;
pub mod factor_model;
pub mod linalg;
pub mod marginals;
pub mod mixed;
pub mod optim;
pub mod quadrature;
pub mod real;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use real::Real;

/// `f64` instantiations of the main model types.
pub type DatasetF64 = dataset::LongitudinalDataset<f64>;
pub type MarginalParamsF64 = marginals::MarginalParams<f64>;
pub type MarginalFitF64 = marginals::MarginalFit<f64>;
pub type BicopParamF64 = bicopula::BicopParam<f64>;
pub type QuadratureRuleF64 = quadrature::QuadratureRule<f64>;
pub type FactorFitF64 = factor_model::FactorFit<f64>;
pub type GodambeResultF64 = factor_model::GodambeResult<f64>;
pub type MixedFitF64 = mixed::MixedFit<f64>;
pub type SimDesignF64 = simulator::SimDesign<f64>;
