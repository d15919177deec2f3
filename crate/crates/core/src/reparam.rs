//! Reparameterization of the latent logits `t`, coefficients `β` and
//! covariance parameters `θ` into approximately independent, unit-scale
//! coordinates.
//!
//! With `Λ` the diagonal curvature of the binomial log-likelihood at its
//! per-site maximizer `t̂`,
//!
//! ```text
//! Σ̃ = (Σ⁻¹ + Λ)⁻¹
//! Ω̃ = (Ω⁻¹ + Xᵀ(Σ⁻¹ − Σ⁻¹Σ̃Σ⁻¹)X)⁻¹
//! t̃ = L_Σ̃⁻¹ (t − Σ̃(Λt̂ + Σ⁻¹Xβ))
//! β̃ = L_Ω̃⁻¹ (β − Ω̃(XᵀΣ⁻¹Σ̃Λt̂ + Ω⁻¹μ))
//! θ̃ = (log σ, log σ² − 2κ log φ, log τ²)
//! ```
//!
//! where `L_A` is the lower Cholesky factor of `A`. Internally `Σ̃` is formed
//! as `Σ − ΣS(I + SΣS)⁻¹SΣ` with `S = Λ^{1/2}` and
//! `Σ⁻¹ − Σ⁻¹Σ̃Σ⁻¹ = S(I + SΣS)⁻¹S`, so `Σ` itself is never inverted.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::covariance::{CovMatrix, CovarianceModel};
use crate::error::{Error, Result};
use crate::link::{logistic, logit};
use crate::linalg;

/// Priors: `β ~ N(μ, Ω)`, `σ ~ Exp(rate)`, `τ ~ Exp(rate)`,
/// `φ ~ Gamma(shape, scale)` with `φ` in km.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub mu: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub sigma_rate: f64,
    pub tau_rate: f64,
    pub phi_shape: f64,
    pub phi_scale: f64,
}

impl PriorSpec {
    /// `μ = 0`, `Ω = 25 I`, `Exp(0.5)` on `σ` and `τ`, `Gamma(3, 35 km)` on `φ`.
    pub fn default_for(p: usize) -> Self {
        PriorSpec {
            mu: DVector::zeros(p),
            omega: DMatrix::identity(p, p) * 25.0,
            sigma_rate: 0.5,
            tau_rate: 0.5,
            phi_shape: 3.0,
            phi_scale: 35.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mu.len();
        if self.omega.nrows() != p || self.omega.ncols() != p {
            return Err(Error::Dimension(format!(
                "prior mean has {p} entries but Ω is {}x{}",
                self.omega.nrows(),
                self.omega.ncols()
            )));
        }
        if (&self.omega - self.omega.transpose()).amax() > 1e-12 * self.omega.amax() {
            return Err(Error::InvalidParameter("prior Ω is not symmetric".into()));
        }
        linalg::cholesky(&self.omega)
            .map_err(|_| Error::InvalidParameter("prior Ω is not positive definite".into()))?;
        for (name, v) in [
            ("sigma_rate", self.sigma_rate),
            ("tau_rate", self.tau_rate),
            ("phi_shape", self.phi_shape),
            ("phi_scale", self.phi_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("prior {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn sigma_mean(&self) -> f64 {
        1.0 / self.sigma_rate
    }

    pub fn tau_mean(&self) -> f64 {
        1.0 / self.tau_rate
    }

    pub fn phi_mean(&self) -> f64 {
        self.phi_shape * self.phi_scale
    }

    /// `log π₁(σ, τ, φ)`.
    pub fn log_density_theta(&self, theta: &Theta) -> f64 {
        let exp_lpdf = |rate: f64, v: f64| rate.ln() - rate * v;
        exp_lpdf(self.sigma_rate, theta.sigma)
            + exp_lpdf(self.tau_rate, theta.tau)
            + (self.phi_shape - 1.0) * theta.phi.ln()
            - theta.phi / self.phi_scale
            - ln_gamma(self.phi_shape)
            - self.phi_shape * self.phi_scale.ln()
    }

    pub fn prepare(&self) -> Result<PreparedPrior> {
        self.validate()?;
        let chol = linalg::cholesky(&self.omega)?;
        let omega_inv = linalg::cholesky_inverse(&chol);
        Ok(PreparedPrior {
            omega_inv_mu: &omega_inv * &self.mu,
            omega_inv,
            log_det_half_omega: linalg::log_det_half(&chol),
            spec: self.clone(),
        })
    }
}

/// A validated prior with `Ω⁻¹` cached.
#[derive(Debug, Clone)]
pub struct PreparedPrior {
    pub spec: PriorSpec,
    pub omega_inv: DMatrix<f64>,
    pub omega_inv_mu: DVector<f64>,
    pub log_det_half_omega: f64,
}

impl PreparedPrior {
    /// `log N(β; μ, Ω)`.
    pub fn log_density_beta(&self, beta: &DVector<f64>) -> f64 {
        let d = beta - &self.spec.mu;
        let p = d.len() as f64;
        -0.5 * d.dot(&(&self.omega_inv * &d))
            - self.log_det_half_omega
            - 0.5 * p * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Covariance parameters as standard deviations and range (km).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub sigma: f64,
    pub tau: f64,
    pub phi: f64,
}

impl Theta {
    pub fn model(&self, kappa: f64) -> CovarianceModel {
        CovarianceModel {
            sigma2: self.sigma * self.sigma,
            tau2: self.tau * self.tau,
            phi: self.phi,
            kappa,
        }
    }
}

/// `(log σ, log σ² − 2κ log φ, log τ²)`.
pub fn theta_to_tilde(theta: &Theta, kappa: f64) -> Result<[f64; 3]> {
    if !(theta.sigma > 0.0 && theta.tau > 0.0 && theta.phi > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "θ map needs σ, τ, φ, κ > 0; got {theta:?}, κ={kappa}"
        )));
    }
    let log_sigma = theta.sigma.ln();
    Ok([
        log_sigma,
        2.0 * log_sigma - 2.0 * kappa * theta.phi.ln(),
        2.0 * theta.tau.ln(),
    ])
}

pub fn tilde_to_theta(tilde: &[f64; 3], kappa: f64) -> Theta {
    Theta {
        sigma: tilde[0].exp(),
        phi: ((2.0 * tilde[0] - tilde[1]) / (2.0 * kappa)).exp(),
        tau: (0.5 * tilde[2]).exp(),
    }
}

/// `log |∂(σ, φ, τ)/∂θ̃|`.
pub fn log_jacobian_theta(tilde: &[f64; 3], kappa: f64) -> f64 {
    let log_sigma = tilde[0];
    let log_phi = (2.0 * tilde[0] - tilde[1]) / (2.0 * kappa);
    let log_tau = 0.5 * tilde[2];
    log_sigma + log_phi - (2.0 * kappa).ln() + log_tau - LN_2
}

/// Per-site maximizers `t̂` and curvatures `λ = n p (1 − p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCenter {
    pub t_hat: DVector<f64>,
    pub lambda_diag: DVector<f64>,
}

/// `t̂ᵢ = logit((yᵢ + ½)/(nᵢ + 1))`, finite even when `yᵢ ∈ {0, nᵢ}`.
pub fn profile_center(y: &[u64], n: &[u64]) -> Result<ProfileCenter> {
    if y.len() != n.len() {
        return Err(Error::Dimension(format!("{} counts, {} totals", y.len(), n.len())));
    }
    let mut t_hat = DVector::zeros(y.len());
    let mut lambda = DVector::zeros(y.len());
    for (i, (&yi, &ni)) in y.iter().zip(n).enumerate() {
        if ni == 0 || yi > ni {
            return Err(Error::Validation(format!("site {i}: need 0 ≤ y ≤ n and n ≥ 1")));
        }
        let t = logit((yi as f64 + 0.5) / (ni as f64 + 1.0));
        let p = logistic(t);
        t_hat[i] = t;
        lambda[i] = ni as f64 * p * (1.0 - p);
    }
    Ok(ProfileCenter {
        t_hat,
        lambda_diag: lambda,
    })
}

/// `Σ̃`, `Ω̃`, their factors, and the affine pieces of the whitening maps for
/// one value of `θ`.
#[derive(Debug, Clone)]
pub struct ConditioningMatrices {
    pub sigma_tilde: DMatrix<f64>,
    pub sigma_tilde_chol: DMatrix<f64>,
    pub omega_tilde: DMatrix<f64>,
    pub omega_tilde_chol: DMatrix<f64>,
    /// `log |Σ̃^{1/2}|`.
    pub log_det_half_sigma_tilde: f64,
    /// `log |Ω̃^{1/2}|`.
    pub log_det_half_omega_tilde: f64,
    /// `Σ̃ Λ t̂`.
    pub t_offset: DVector<f64>,
    /// `Σ̃ Σ⁻¹ X`.
    pub t_gain: DMatrix<f64>,
    /// `Ω̃ (XᵀΣ⁻¹Σ̃Λt̂ + Ω⁻¹μ)`.
    pub beta_center: DVector<f64>,
}

impl ConditioningMatrices {
    /// Mean of `t` given `β`: `Σ̃(Λt̂ + Σ⁻¹Xβ)`.
    pub fn t_center(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.t_offset + &self.t_gain * beta
    }

    pub fn beta_from_tilde(&self, beta_tilde: &DVector<f64>) -> DVector<f64> {
        &self.beta_center + &self.omega_tilde_chol * beta_tilde
    }

    pub fn t_from_tilde(&self, beta: &DVector<f64>, t_tilde: &DVector<f64>) -> DVector<f64> {
        self.t_center(beta) + &self.sigma_tilde_chol * t_tilde
    }
}

pub fn conditioning_matrices(
    sigma: &CovMatrix,
    x: &DMatrix<f64>,
    center: &ProfileCenter,
    prior: &PriorSpec,
) -> Result<ConditioningMatrices> {
    conditioning_from(sigma.matrix(), x, center, &prior.prepare()?)
}

/// As [`conditioning_matrices`] with a raw covariance and a prepared prior.
pub fn conditioning_from(
    sigma: &DMatrix<f64>,
    x: &DMatrix<f64>,
    center: &ProfileCenter,
    prior: &PreparedPrior,
) -> Result<ConditioningMatrices> {
    let n = sigma.nrows();
    if sigma.ncols() != n || x.nrows() != n || center.t_hat.len() != n {
        return Err(Error::Dimension(format!(
            "Σ is {}x{}, X has {} rows, {} centers",
            n,
            sigma.ncols(),
            x.nrows(),
            center.t_hat.len()
        )));
    }
    if x.ncols() != prior.spec.mu.len() {
        return Err(Error::Dimension(format!(
            "X has {} columns, prior has {}",
            x.ncols(),
            prior.spec.mu.len()
        )));
    }
    let s = center.lambda_diag.map(f64::sqrt);

    // SΣ, then B = I + SΣS.
    let mut s_sigma = sigma.clone();
    for (i, mut row) in s_sigma.row_iter_mut().enumerate() {
        row *= s[i];
    }
    let mut b = s_sigma.clone();
    for (j, mut col) in b.column_iter_mut().enumerate() {
        col *= s[j];
    }
    for i in 0..n {
        b[(i, i)] += 1.0;
    }
    let b_chol = linalg::cholesky(&b)?;

    let v = linalg::solve_lower_mat(&b_chol, &s_sigma);
    let mut sigma_tilde = sigma - v.transpose() * &v;
    linalg::symmetrize(&mut sigma_tilde);
    let sigma_tilde_chol = linalg::cholesky(&sigma_tilde)?;

    let mut sx = x.clone();
    for (i, mut row) in sx.row_iter_mut().enumerate() {
        row *= s[i];
    }
    let w = linalg::solve_lower_mat(&b_chol, &sx);
    let t_gain = x - v.transpose() * &w;

    let lambda_t_hat = center.lambda_diag.component_mul(&center.t_hat);
    let t_offset = &sigma_tilde * &lambda_t_hat;

    let precision = &prior.omega_inv + w.transpose() * &w;
    let precision_chol = linalg::cholesky(&precision)?;
    let omega_tilde = linalg::cholesky_inverse(&precision_chol);
    let omega_tilde_chol = linalg::cholesky(&omega_tilde)?;
    let beta_center = &omega_tilde * (t_gain.tr_mul(&lambda_t_hat) + &prior.omega_inv_mu);

    Ok(ConditioningMatrices {
        log_det_half_sigma_tilde: linalg::log_det_half(&sigma_tilde_chol),
        log_det_half_omega_tilde: linalg::log_det_half(&omega_tilde_chol),
        sigma_tilde,
        sigma_tilde_chol,
        omega_tilde,
        omega_tilde_chol,
        t_offset,
        t_gain,
        beta_center,
    })
}

/// Whitened coordinates `(t̃, β̃, θ̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub t_tilde: DVector<f64>,
    pub beta_tilde: DVector<f64>,
    pub theta_tilde: [f64; 3],
}

pub fn whiten(
    t: &DVector<f64>,
    beta: &DVector<f64>,
    theta: &Theta,
    kappa: f64,
    cm: &ConditioningMatrices,
) -> Result<TransformedState> {
    let theta_tilde = theta_to_tilde(theta, kappa)?;
    if t.len() != cm.t_offset.len() || beta.len() != cm.beta_center.len() {
        return Err(Error::Dimension(format!(
            "state has {} logits and {} coefficients, expected {} and {}",
            t.len(),
            beta.len(),
            cm.t_offset.len(),
            cm.beta_center.len()
        )));
    }
    let t_tilde = linalg::solve_lower(&cm.sigma_tilde_chol, &(t - cm.t_center(beta)));
    let beta_tilde = linalg::solve_lower(&cm.omega_tilde_chol, &(beta - &cm.beta_center));
    Ok(TransformedState {
        t_tilde,
        beta_tilde,
        theta_tilde,
    })
}

/// Inverse of [`whiten`]: `(t, β, θ)`.
pub fn unwhiten(
    state: &TransformedState,
    kappa: f64,
    cm: &ConditioningMatrices,
) -> Result<(DVector<f64>, DVector<f64>, Theta)> {
    if state.t_tilde.len() != cm.t_offset.len() || state.beta_tilde.len() != cm.beta_center.len() {
        return Err(Error::Dimension("whitened state does not match conditioning matrices".into()));
    }
    let beta = cm.beta_from_tilde(&state.beta_tilde);
    let t = cm.t_from_tilde(&beta, &state.t_tilde);
    Ok((t, beta, tilde_to_theta(&state.theta_tilde, kappa)))
}
