use log::{debug, info, warn};
use nalgebra::DVector;
use rayon::prelude::*;

use super::kernels::{adaptive_step_update_towards, mala_step, rwmh_step, Block, StepOutcome};
use super::posterior::{Evaluation, GeoModel, ThetaContext};
use super::{ChainDiagnostics, ChainOutput, Draw, McmcConfig, StepRecord};
use crate::data::{DesignMatrix, SpatialDataset};
use crate::error::Result;
use crate::glm::irls_fit;
use crate::reparam::{theta_to_tilde, whiten, PriorSpec, Theta, TransformedState};
use crate::rng::{derive_seed, seeded};

/// Starting point in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub beta: DVector<f64>,
    pub t: DVector<f64>,
    pub theta: Theta,
}

impl InitialState {
    /// `β` from the logistic-regression fit (zero if it fails to converge),
    /// `t = t̂`, and `θ` at its prior means.
    pub fn default_for(model: &GeoModel) -> Self {
        let p = model.n_coefficients();
        let beta = match irls_fit(model.design(), model.counts(), model.totals()) {
            Ok(fit) if fit.converged && fit.beta_hat.iter().all(|b| b.is_finite()) => fit.beta_hat,
            Ok(_) | Err(_) => {
                warn!("logistic fit did not converge; starting coefficients at zero");
                DVector::zeros(p)
            }
        };
        let prior = &model.prior().spec;
        InitialState {
            beta,
            t: model.center().t_hat.clone(),
            theta: Theta {
                sigma: prior.sigma_mean(),
                tau: prior.tau_mean(),
                phi: prior.phi_mean(),
            },
        }
    }
}

/// Runs one chain on a training set with the default starting point.
pub fn run_chain(
    train: &SpatialDataset,
    x: &DesignMatrix,
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<ChainOutput> {
    let model = GeoModel::new(&train.coords(), x.matrix(), &train.counts(), &train.totals(), prior, config.kappa)?;
    let init = InitialState::default_for(&model);
    run_model(&model, &init, config)
}

/// Runs `chains` independent chains, chain `k` seeded with
/// `derive_seed(config.seed, k)`. Results are in chain order.
pub fn run_chains(
    train: &SpatialDataset,
    x: &DesignMatrix,
    prior: &PriorSpec,
    config: &McmcConfig,
    chains: usize,
) -> Result<Vec<ChainOutput>> {
    let model = GeoModel::new(&train.coords(), x.matrix(), &train.counts(), &train.totals(), prior, config.kappa)?;
    let init = InitialState::default_for(&model);
    (0..chains as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = McmcConfig {
                seed: derive_seed(config.seed, k),
                ..config.clone()
            };
            run_model(&model, &init, &cfg)
        })
        .collect()
}

struct Current {
    ctx: ThetaContext,
    beta_tilde: DVector<f64>,
    t_tilde: DVector<f64>,
    eval: Evaluation,
    grad: Option<DVector<f64>>,
}

/// The sampler proper: per-coordinate adaptive random walk on `θ̃`, a block
/// random walk on `β̃`, and a Langevin step on `t̃`.
pub fn run_model(model: &GeoModel, init: &InitialState, config: &McmcConfig) -> Result<ChainOutput> {
    config.validate()?;
    let kappa = model.kappa();
    let n = model.n_sites();
    let p = model.n_coefficients();
    let h = config.mala_h_for(n);
    let beta_step = config.beta_step_for(p);
    let mut rng = seeded(config.seed);

    let theta_tilde = theta_to_tilde(&init.theta, kappa)?;
    let ctx = model.theta_context(theta_tilde)?;
    let start = whiten(&init.t, &init.beta, &init.theta, kappa, &ctx.cm)?;
    let eval = model.evaluate(&ctx, &start.beta_tilde, &start.t_tilde);
    let mut cur = Current {
        ctx,
        beta_tilde: start.beta_tilde,
        t_tilde: start.t_tilde,
        eval,
        grad: None,
    };

    let mut steps = [config.initial_step; 3];
    let mut theta_accepts = [0u64; 3];
    let (mut beta_accepts, mut t_accepts, mut failures) = (0u64, 0u64, 0u64);
    let n_draws = config.n_draws();
    let mut draws = Vec::with_capacity(n_draws);
    let mut transformed = Vec::with_capacity(n_draws);
    let mut step_trace = Vec::new();
    let report_every = (config.iterations / 10).max(1);

    for iter in 1..=config.iterations {
        if iter % report_every == 0 {
            info!("iteration {iter}/{}", config.iterations);
        }
        for c in 0..3 {
            let current = DVector::from_column_slice(&cur.ctx.theta_tilde);
            let outcome = rwmh_step(&current, cur.eval.log_target, Block::Coordinate(c), steps[c], &mut rng, |prop| {
                let tilde = [prop[0], prop[1], prop[2]];
                let ctx = model.theta_context(tilde).ok()?;
                let eval = model.evaluate(&ctx, &cur.beta_tilde, &cur.t_tilde);
                Some((eval.log_target, (ctx, eval)))
            });
            match outcome {
                StepOutcome::Accepted {
                    payload: (ctx, eval), ..
                } => {
                    theta_accepts[c] += 1;
                    cur.ctx = ctx;
                    cur.eval = eval;
                    cur.grad = None;
                }
                StepOutcome::Rejected => {}
                StepOutcome::Failed => {
                    failures += 1;
                    debug!("iteration {iter}: covariance proposal for coordinate {c} could not be factorized");
                }
            }
            let alpha = theta_accepts[c] as f64 / iter as f64;
            steps[c] = adaptive_step_update_towards(steps[c], iter, alpha, config.adapt_c1, config.adapt_c2, config.target_accept_theta);
        }

        let outcome = rwmh_step(&cur.beta_tilde, cur.eval.log_target, Block::All, beta_step, &mut rng, |prop| {
            Some((model.evaluate(&cur.ctx, prop, &cur.t_tilde).log_target, ()))
        });
        if let StepOutcome::Accepted { state, .. } = outcome {
            beta_accepts += 1;
            cur.eval = model.evaluate(&cur.ctx, &state, &cur.t_tilde);
            cur.beta_tilde = state;
            cur.grad = None;
        }

        let grad = match cur.grad.take() {
            Some(g) => g,
            None => {
                let (eval, g) = model.evaluate_with_grad(&cur.ctx, &cur.beta_tilde, &cur.t_tilde);
                cur.eval = eval;
                g
            }
        };
        let outcome = mala_step(&cur.t_tilde, cur.eval.log_target, &grad, h, &mut rng, |prop| {
            let (eval, g) = model.evaluate_with_grad(&cur.ctx, &cur.beta_tilde, prop);
            Some((eval.log_target, g, eval))
        });
        match outcome {
            StepOutcome::Accepted {
                state,
                payload: (g, eval),
                ..
            } => {
                t_accepts += 1;
                cur.t_tilde = state;
                cur.eval = eval;
                cur.grad = Some(g);
            }
            _ => cur.grad = Some(grad),
        }

        if iter % config.thin == 0 {
            step_trace.push(StepRecord { iteration: iter, steps });
        }
        if iter > config.burn_in && (iter - config.burn_in) % config.thin == 0 {
            draws.push(Draw {
                beta: cur.eval.beta.clone(),
                theta: cur.ctx.theta,
                t: cur.eval.t.clone(),
            });
            transformed.push(TransformedState {
                t_tilde: cur.t_tilde.clone(),
                beta_tilde: cur.beta_tilde.clone(),
                theta_tilde: cur.ctx.theta_tilde,
            });
        }
    }

    let total = config.iterations as f64;
    Ok(ChainOutput {
        draws,
        transformed,
        kappa,
        diagnostics: ChainDiagnostics {
            seed: config.seed,
            iterations: config.iterations,
            burn_in: config.burn_in,
            thin: config.thin,
            accept_theta: theta_accepts.map(|a| a as f64 / total),
            accept_beta: beta_accepts as f64 / total,
            accept_t: t_accepts as f64 / total,
            failed_proposals: failures,
            final_steps: steps,
            mala_h: h,
            beta_step,
            step_trace,
        },
    })
}
