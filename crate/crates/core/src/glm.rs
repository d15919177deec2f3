//! Binomial logistic regression without a spatial term, fitted by IRLS, and
//! the parametric predictive simulation used as a baseline.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::link::{logistic, softplus};
use crate::linalg;
use crate::rng::seeded;

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOL: f64 = 1e-8;
pub const LOGLIK_REL_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 10;
/// Linear predictors beyond this magnitude indicate (quasi-)separation.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub beta_hat: DVector<f64>,
    /// Inverse Fisher information at `beta_hat`.
    pub cov_hat: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub log_likelihood: f64,
    /// Deviance after each accepted iteration, starting from `β = 0`.
    pub deviance_trace: Vec<f64>,
    /// Why the fit is not trustworthy, if it is not.
    pub diagnostics: Option<String>,
}

/// Binomial log-likelihood without the constant `Σ log C(n, y)`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &[u64], n: &[u64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y.iter().zip(n))
        .map(|(&e, (&yi, &ni))| yi as f64 * e - ni as f64 * softplus(e))
        .sum()
}

/// Residual deviance `2 Σ [y log(y/μ) + (n−y) log((n−y)/(n−μ))]`.
pub fn deviance(x: &DMatrix<f64>, y: &[u64], n: &[u64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut d = 0.0;
    for ((&e, &yi), &ni) in eta.iter().zip(y).zip(n) {
        let (yf, nf) = (yi as f64, ni as f64);
        let mu = nf * logistic(e);
        if yi > 0 {
            d += yf * (yf / mu).ln();
        }
        if yi < ni {
            d += (nf - yf) * ((nf - yf) / (nf - mu)).ln();
        }
    }
    2.0 * d
}

pub fn irls_fit(x: &DMatrix<f64>, y: &[u64], n: &[u64]) -> Result<GlmFit> {
    let rows = x.nrows();
    if y.len() != rows || n.len() != rows {
        return Err(Error::Dimension(format!(
            "design has {rows} rows, {} counts, {} totals",
            y.len(),
            n.len()
        )));
    }
    if let Some(i) = n.iter().position(|&ni| ni == 0) {
        return Err(Error::Validation(format!("row {i}: n_total must be ≥ 1")));
    }
    if let Some(i) = y.iter().zip(n).position(|(a, b)| a > b) {
        return Err(Error::Validation(format!("row {i}: count exceeds total")));
    }

    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, y, n, &beta);
    let mut trace = vec![deviance(x, y, n, &beta)];
    let mut converged = false;
    let mut diagnostics = None;
    let mut iterations = 0;
    let mut info = DMatrix::zeros(p, p);

    while iterations < MAX_ITERATIONS {
        let (score, inf) = score_and_information(x, y, n, &beta);
        info = inf;
        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        let chol = match linalg::cholesky(&info) {
            Ok(l) => l,
            Err(_) => {
                diagnostics = Some("Fisher information is singular (collinear design?)".into());
                break;
            }
        };
        let step = linalg::cholesky_solve(&chol, &score);
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood(x, y, n, &candidate);
        let mut halvings = 0;
        while !(cand_ll >= ll) && halvings < MAX_HALVINGS {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = log_likelihood(x, y, n, &candidate);
            halvings += 1;
        }
        iterations += 1;
        if !(cand_ll >= ll) {
            diagnostics = Some("step halving failed to increase the likelihood".into());
            break;
        }
        let rel = (cand_ll - ll).abs() / ll.abs().max(1e-300);
        beta = candidate;
        ll = cand_ll;
        trace.push(deviance(x, y, n, &beta));
        if rel < LOGLIK_REL_TOL {
            info = score_and_information(x, y, n, &beta).1;
            converged = true;
            break;
        }
    }
    if !converged && diagnostics.is_none() {
        diagnostics = Some(format!("no convergence after {MAX_ITERATIONS} iterations"));
    }
    let max_eta = (x * &beta).amax();
    if converged && max_eta > SEPARATION_ETA {
        converged = false;
        diagnostics = Some(format!(
            "linear predictor reaches {max_eta:.1}: data look (quasi-)separated"
        ));
    }
    let cov_hat = linalg::cholesky(&info)
        .map(|l| linalg::cholesky_inverse(&l))
        .unwrap_or_else(|_| DMatrix::from_element(p, p, f64::NAN));

    Ok(GlmFit {
        deviance: *trace.last().unwrap(),
        beta_hat: beta,
        cov_hat,
        converged,
        iterations,
        log_likelihood: ll,
        deviance_trace: trace,
        diagnostics,
    })
}

fn score_and_information(
    x: &DMatrix<f64>,
    y: &[u64],
    n: &[u64],
    beta: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let eta = x * beta;
    let rows = x.nrows();
    let mut resid = DVector::zeros(rows);
    let mut weighted = x.clone();
    for i in 0..rows {
        let pi = logistic(eta[i]);
        let nf = n[i] as f64;
        resid[i] = y[i] as f64 - nf * pi;
        let w = (nf * pi * (1.0 - pi)).sqrt();
        weighted.row_mut(i).scale_mut(w);
    }
    (x.tr_mul(&resid), weighted.tr_mul(&weighted))
}

/// `logit⁻¹(X_new β̂)`.
pub fn glm_predict_probs(fit: &GlmFit, x_new: &DMatrix<f64>) -> Vec<f64> {
    (x_new * &fit.beta_hat).iter().map(|&e| logistic(e)).collect()
}

/// Per-site count draws `Binomial(n_j, p̂_j)`, one row per draw.
pub fn glm_parametric_counts(p_hat: &[f64], n: &[u64], draws: usize, seed: u64) -> Result<Vec<Vec<u64>>> {
    if p_hat.len() != n.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} sites",
            p_hat.len(),
            n.len()
        )));
    }
    let dists = p_hat
        .iter()
        .zip(n)
        .map(|(&p, &ni)| {
            Binomial::new(ni, p.clamp(0.0, 1.0))
                .map_err(|e| Error::InvalidParameter(format!("binomial({ni}, {p}): {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seeded(seed);
    Ok((0..draws)
        .map(|_| dists.iter().map(|d| d.sample(&mut rng)).collect())
        .collect())
}

/// Draws of `Σ_j Binomial(n_j, p̂_j)`; the row sums of [`glm_parametric_counts`].
pub fn glm_parametric_total_counts(p_hat: &[f64], n: &[u64], draws: usize, seed: u64) -> Result<Vec<u64>> {
    Ok(glm_parametric_counts(p_hat, n, draws, seed)?
        .iter()
        .map(|r| r.iter().sum())
        .collect())
}
