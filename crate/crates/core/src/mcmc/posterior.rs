//! The joint posterior of `(θ, β, t)` expressed in whitened coordinates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{covariance_from_distances, distance_matrix};
use crate::error::{Error, Result};
use crate::link::{binomial_log_pmf, logistic};
use crate::linalg;
use crate::reparam::{
    conditioning_from, log_jacobian_theta, profile_center, tilde_to_theta, ConditioningMatrices,
    PreparedPrior, PriorSpec, ProfileCenter, Theta, TransformedState,
};

/// Observed data, design, priors and the precomputed profile centre.
#[derive(Debug, Clone)]
pub struct GeoModel {
    y: Vec<u64>,
    n: Vec<u64>,
    yf: DVector<f64>,
    nf: DVector<f64>,
    x: DMatrix<f64>,
    dist: DMatrix<f64>,
    kappa: f64,
    prior: PreparedPrior,
    center: ProfileCenter,
}

/// Everything that depends on `θ` alone.
#[derive(Debug, Clone)]
pub struct ThetaContext {
    pub theta_tilde: [f64; 3],
    pub theta: Theta,
    /// Lower factor of `Σ(θ)` (spatial plus nugget).
    pub sigma_chol: DMatrix<f64>,
    pub cm: ConditioningMatrices,
    /// Sum of all terms of the log target that depend on `θ` only.
    theta_terms: f64,
}

/// The log target at one state, with the unwhitened values it implies.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_target: f64,
    pub beta: DVector<f64>,
    pub t: DVector<f64>,
}

impl GeoModel {
    pub fn new(
        coords: &[[f64; 2]],
        x: &DMatrix<f64>,
        y: &[u64],
        n: &[u64],
        prior: &PriorSpec,
        kappa: f64,
    ) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Validation("the sampler needs at least two training sites".into()));
        }
        if x.nrows() != coords.len() || y.len() != coords.len() || n.len() != coords.len() {
            return Err(Error::Dimension(format!(
                "{} sites, {} design rows, {} counts, {} totals",
                coords.len(),
                x.nrows(),
                y.len(),
                n.len()
            )));
        }
        if !(kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        let prior = prior.prepare()?;
        if prior.spec.mu.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "prior has {} coefficients, design has {}",
                prior.spec.mu.len(),
                x.ncols()
            )));
        }
        let center = profile_center(y, n)?;
        Ok(GeoModel {
            yf: DVector::from_iterator(y.len(), y.iter().map(|&v| v as f64)),
            nf: DVector::from_iterator(n.len(), n.iter().map(|&v| v as f64)),
            y: y.to_vec(),
            n: n.to_vec(),
            x: x.clone(),
            dist: distance_matrix(coords),
            kappa,
            prior,
            center,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.y.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.x.ncols()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn prior(&self) -> &PreparedPrior {
        &self.prior
    }

    pub fn center(&self) -> &ProfileCenter {
        &self.center
    }

    pub fn counts(&self) -> &[u64] {
        &self.y
    }

    pub fn totals(&self) -> &[u64] {
        &self.n
    }

    /// `Σ(θ)` including the nugget.
    pub fn covariance(&self, theta: &Theta) -> Result<DMatrix<f64>> {
        let model = theta.model(self.kappa);
        model.validate()?;
        Ok(covariance_from_distances(&self.dist, &model, true))
    }

    /// Builds the `θ`-dependent pieces. Fails when a factorization does.
    pub fn theta_context(&self, theta_tilde: [f64; 3]) -> Result<ThetaContext> {
        if theta_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite covariance parameters".into()));
        }
        let theta = tilde_to_theta(&theta_tilde, self.kappa);
        let sigma = self.covariance(&theta)?;
        let sigma_chol = linalg::cholesky(&sigma)?;
        let cm = conditioning_from(&sigma, &self.x, &self.center, &self.prior)?;
        let n = self.n_sites() as f64;
        let theta_terms = self.prior.spec.log_density_theta(&theta)
            + log_jacobian_theta(&theta_tilde, self.kappa)
            + cm.log_det_half_sigma_tilde
            + cm.log_det_half_omega_tilde
            - linalg::log_det_half(&sigma_chol)
            - 0.5 * n * (2.0 * PI).ln();
        if !theta_terms.is_finite() {
            return Err(Error::InvalidParameter("covariance parameters outside prior support".into()));
        }
        Ok(ThetaContext {
            theta_tilde,
            theta,
            sigma_chol,
            cm,
            theta_terms,
        })
    }

    /// `Σᵢ log Binom(yᵢ; nᵢ, logistic(tᵢ))`.
    pub fn log_likelihood(&self, t: &DVector<f64>) -> f64 {
        self.y
            .iter()
            .zip(&self.n)
            .zip(t.iter())
            .map(|((&y, &n), &t)| binomial_log_pmf(y, n, t))
            .sum()
    }

    /// `yᵢ − nᵢ logistic(tᵢ)`.
    pub fn score(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(t.len(), (0..t.len()).map(|i| self.yf[i] - self.nf[i] * logistic(t[i])))
    }

    /// Log posterior density (up to the evidence) in the original coordinates.
    pub fn log_posterior(&self, t: &DVector<f64>, beta: &DVector<f64>, theta: &Theta) -> Result<f64> {
        let sigma = self.covariance(theta)?;
        let l = linalg::cholesky(&sigma)?;
        let r = t - &self.x * beta;
        let u = linalg::solve_lower(&l, &r);
        let n = t.len() as f64;
        Ok(self.prior.spec.log_density_theta(theta)
            + self.prior.log_density_beta(beta)
            - 0.5 * u.norm_squared()
            - linalg::log_det_half(&l)
            - 0.5 * n * (2.0 * PI).ln()
            + self.log_likelihood(t))
    }

    fn unwhiten_parts(
        &self,
        ctx: &ThetaContext,
        beta_tilde: &DVector<f64>,
        t_tilde: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>, f64) {
        let beta = ctx.cm.beta_from_tilde(beta_tilde);
        let t = ctx.cm.t_from_tilde(&beta, t_tilde);
        let r = &t - &self.x * &beta;
        let u = linalg::solve_lower(&ctx.sigma_chol, &r);
        let lp = ctx.theta_terms + self.prior.log_density_beta(&beta) - 0.5 * u.norm_squared()
            + self.log_likelihood(&t);
        (beta, t, u, lp)
    }

    /// Log target at `(t̃, β̃)` under the given `θ` context.
    pub fn evaluate(&self, ctx: &ThetaContext, beta_tilde: &DVector<f64>, t_tilde: &DVector<f64>) -> Evaluation {
        let (beta, t, _, log_target) = self.unwhiten_parts(ctx, beta_tilde, t_tilde);
        Evaluation { log_target, beta, t }
    }

    /// As [`evaluate`](Self::evaluate), also returning `∇_t̃`.
    pub fn evaluate_with_grad(
        &self,
        ctx: &ThetaContext,
        beta_tilde: &DVector<f64>,
        t_tilde: &DVector<f64>,
    ) -> (Evaluation, DVector<f64>) {
        let (beta, t, u, log_target) = self.unwhiten_parts(ctx, beta_tilde, t_tilde);
        let prec_r = linalg::solve_lower_transpose(&ctx.sigma_chol, &u);
        let g_t = self.score(&t) - prec_r;
        let grad = ctx.cm.sigma_tilde_chol.tr_mul(&g_t);
        (Evaluation { log_target, beta, t }, grad)
    }

    /// Log target of a whitened state, building the `θ` context from scratch.
    pub fn log_target(&self, state: &TransformedState) -> Result<f64> {
        let ctx = self.theta_context(state.theta_tilde)?;
        Ok(self.evaluate(&ctx, &state.beta_tilde, &state.t_tilde).log_target)
    }

    /// `∇_t̃` of the log target at a whitened state.
    pub fn grad_log_target_t_tilde(&self, state: &TransformedState) -> Result<DVector<f64>> {
        let ctx = self.theta_context(state.theta_tilde)?;
        Ok(self.evaluate_with_grad(&ctx, &state.beta_tilde, &state.t_tilde).1)
    }
}
