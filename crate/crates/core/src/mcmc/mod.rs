//! Adaptive Metropolis-within-Gibbs sampler for the spatial binomial model.
//!
//! One iteration updates each whitened covariance coordinate with an
//! adaptive random walk, the whitened coefficients with a block random walk,
//! and the whitened logits with a Langevin step. Whitened `t̃` and `β̃` are
//! held fixed while `θ̃` moves, so the implied `t` and `β` move with it.

mod chain;
pub mod kernels;
mod output;
mod posterior;

use nalgebra::DVector;

pub use chain::{run_chain, run_chains, run_model, InitialState};
pub use kernels::{
    accept, adaptive_step_update, default_mala_h, mala_step, rwmh_step, Block, StepOutcome,
};
pub use output::{pool_chains, read_chain_csv, write_chain_csv, write_diagnostics};
pub use posterior::{Evaluation, GeoModel, ThetaContext};

use crate::error::{Error, Result};
use crate::reparam::{Theta, TransformedState};

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Langevin step; `None` means `1.65² / n^{1/3}`.
    pub mala_h: Option<f64>,
    pub adapt_c1: f64,
    pub adapt_c2: f64,
    pub target_accept_theta: f64,
    /// Coefficient random-walk sd; `None` means `2.4 / √p`.
    pub beta_step: Option<f64>,
    pub initial_step: f64,
    /// Matérn smoothness, held fixed.
    pub kappa: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 100_000,
            burn_in: 50_000,
            thin: 10,
            mala_h: None,
            adapt_c1: 1.0,
            adapt_c2: 0.6,
            target_accept_theta: kernels::TARGET_ACCEPT_THETA,
            beta_step: None,
            initial_step: 1.0,
            kappa: 1.5,
            seed: 1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.burn_in >= self.iterations {
            return bad(format!("burn_in ({}) must be below iterations ({})", self.burn_in, self.iterations));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if let Some(h) = self.mala_h {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("mala_h must be positive, got {h}"));
            }
        }
        if let Some(s) = self.beta_step {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("beta_step must be positive, got {s}"));
            }
        }
        if !(self.adapt_c1 > 0.0) {
            return bad(format!("adapt_c1 must be positive, got {}", self.adapt_c1));
        }
        if !(self.adapt_c2 > 0.0 && self.adapt_c2 <= 1.0) {
            return bad(format!("adapt_c2 must lie in (0, 1], got {}", self.adapt_c2));
        }
        if !(self.target_accept_theta > 0.0 && self.target_accept_theta < 1.0) {
            return bad(format!("target acceptance must lie in (0, 1), got {}", self.target_accept_theta));
        }
        if !(self.initial_step > 0.0) {
            return bad(format!("initial_step must be positive, got {}", self.initial_step));
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        Ok(())
    }

    /// Number of retained draws.
    pub fn n_draws(&self) -> usize {
        ((self.iterations.saturating_sub(self.burn_in)) / self.thin.max(1)) as usize
    }

    pub fn mala_h_for(&self, n_sites: usize) -> f64 {
        self.mala_h.unwrap_or_else(|| default_mala_h(n_sites))
    }

    pub fn beta_step_for(&self, p: usize) -> f64 {
        self.beta_step.unwrap_or(2.4 / (p as f64).sqrt())
    }
}

/// One retained draw in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub beta: DVector<f64>,
    pub theta: Theta,
    pub t: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub iteration: u64,
    pub steps: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub seed: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Acceptance fraction of each `θ̃` coordinate over the whole run.
    pub accept_theta: [f64; 3],
    pub accept_beta: f64,
    pub accept_t: f64,
    /// Proposals rejected because a factorization failed.
    pub failed_proposals: u64,
    pub final_steps: [f64; 3],
    pub mala_h: f64,
    pub beta_step: f64,
    /// Adaptive step sizes every `thin` iterations, burn-in included.
    pub step_trace: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<Draw>,
    /// Whitened state at each retained draw. Empty when read back from disk.
    pub transformed: Vec<TransformedState>,
    pub kappa: f64,
    pub diagnostics: ChainDiagnostics,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws of coefficient `j`.
    pub fn beta_samples(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.beta[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draw_count_arithmetic() {
        let c = McmcConfig {
            iterations: 1000,
            burn_in: 500,
            thin: 10,
            ..Default::default()
        };
        assert_eq!(c.n_draws(), 50);
        let c = McmcConfig { thin: 7, ..c };
        assert_eq!(c.n_draws(), 71);
    }

    #[test]
    fn validation_names_the_field() {
        let c = McmcConfig {
            burn_in: 100,
            iterations: 100,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("burn_in"));
        let c = McmcConfig {
            thin: 0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("thin"));
        let c = McmcConfig {
            mala_h: Some(0.0),
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("mala_h"));
        assert!(McmcConfig::default().validate().is_ok());
    }
}
