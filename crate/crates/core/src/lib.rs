//! Bayesian spatial binomial regression with a Matérn Gaussian field.
//!
//! Counts `yᵢ ~ Binomial(nᵢ, logistic(tᵢ))` with `t = Xβ + U + Z`, where `U`
//! is a Matérn field and `Z` an independent nugget. Posterior inference uses
//! a reparameterized Metropolis-within-Gibbs sampler with a Langevin step on
//! the latent logits.

pub mod assess;
pub mod bessel;
pub mod cli;
pub mod config;
pub mod covariance;
pub mod data;
pub mod error;
pub mod glm;
pub mod link;
pub mod linalg;
pub mod mcmc;
pub mod reparam;
pub mod predict;
pub mod raster;
pub mod rng;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, Result};

/// The guide's chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/covariance.md")]
    pub mod covariance {}
    #[doc = include_str!("../../../book/src/reparameterization.md")]
    pub mod reparameterization {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    pub mod sampler {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    pub mod prediction {}
    #[doc = include_str!("../../../book/src/assessment.md")]
    pub mod assessment {}
    #[doc = include_str!("../../../book/src/subsampling.md")]
    pub mod subsampling {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
