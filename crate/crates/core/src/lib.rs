//! Tempered (fractional) posteriors and their variational Bayes approximations.
//!
//! The crate is organized around a small set of numerical subsystems:
//!
//! - [`divergences`]: Rényi/KL/Hellinger divergences, exact closed forms for
//!   Gaussian-noise models and clip operators.
//! - [`tempered`]: exact tempered posteriors on finite parameter spaces, the
//!   Donsker–Varadhan identity, and evaluators for concentration-bound and
//!   rate formulas.
//! - [`gaussian_vb`]: Gaussian variational families and projected stochastic
//!   gradient descent on the tempered variational objective.
//! - [`logistic`]: the binary regression model feeding `gaussian_vb`.
//! - [`matrix_completion`]: tempered mean-field VB for noisy matrix completion.
//! - [`regression`]: model-selection VB for nonparametric regression on the
//!   trigonometric basis.
//!
//! Scalar-type-agnostic core math (`scalar`, `quad`, `divergences`,
//! `tempered`) is generic over [`scalar::Real`] (`f32`/`f64`); the optimizers
//! and samplers are concrete in `f64`. `f64` aliases for the generic types
//! live at the crate root.

pub mod divergences;
mod error;
pub mod gaussian_vb;
pub mod logistic;
pub mod matrix_completion;
pub mod quad;
pub mod regression;
pub mod scalar;
pub mod tempered;

pub use error::{Error, Result};

/// `f64` instantiations of the generic core types.
pub type RenyiOrder = divergences::RenyiOrder<f64>;
pub type DiscreteDistribution = divergences::DiscreteDistribution<f64>;
pub type SharedVarGaussianPair = divergences::SharedVarGaussianPair<f64>;
pub type ClipLevel = divergences::ClipLevel<f64>;
pub type TemperConfig = tempered::TemperConfig<f64>;
pub type DiscreteModel = tempered::DiscreteModel<f64>;
pub type BoundQuery = tempered::BoundQuery<f64>;
pub type LipschitzStats = tempered::LipschitzStats<f64>;
