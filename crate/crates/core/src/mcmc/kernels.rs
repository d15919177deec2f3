//! Target-agnostic Metropolis–Hastings building blocks. Each step takes a
//! closure that scores a proposed point and may attach a payload (cached
//! per-proposal state) that is handed back on acceptance.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// Step sizes never adapt below this.
pub const MIN_STEP: f64 = 1e-8;
/// Acceptance rate the covariance-parameter steps are tuned towards.
pub const TARGET_ACCEPT_THETA: f64 = 0.45;

/// Which coordinates a random-walk proposal moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Coordinate(usize),
    All,
}

#[derive(Debug)]
pub enum StepOutcome<S> {
    Accepted {
        state: DVector<f64>,
        log_target: f64,
        payload: S,
    },
    Rejected,
    /// The target could not be evaluated at the proposal; counts as a rejection.
    Failed,
}

impl<S> StepOutcome<S> {
    pub fn accepted(&self) -> bool {
        matches!(self, StepOutcome::Accepted { .. })
    }
}

/// Metropolis accept/reject for a log acceptance ratio. `NaN` rejects.
pub fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Symmetric Gaussian random-walk step on `block` with standard deviation `sd`.
pub fn rwmh_step<R, S, F>(
    current: &DVector<f64>,
    current_log_target: f64,
    block: Block,
    sd: f64,
    rng: &mut R,
    eval: F,
) -> StepOutcome<S>
where
    R: Rng + ?Sized,
    F: FnOnce(&DVector<f64>) -> Option<(f64, S)>,
{
    let mut proposal = current.clone();
    match block {
        Block::Coordinate(i) => proposal[i] += sd * rng.sample::<f64, _>(StandardNormal),
        Block::All => {
            for v in proposal.iter_mut() {
                *v += sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let Some((lp, payload)) = eval(&proposal) else {
        return StepOutcome::Failed;
    };
    if accept(lp - current_log_target, rng) {
        StepOutcome::Accepted {
            state: proposal,
            log_target: lp,
            payload,
        }
    } else {
        StepOutcome::Rejected
    }
}

/// `x + ½ h ∇ + √h z`.
pub fn mala_proposal(x: &DVector<f64>, grad: &DVector<f64>, h: f64, z: &DVector<f64>) -> DVector<f64> {
    x + grad * (0.5 * h) + z * h.sqrt()
}

/// Log density (up to a constant) of proposing `to` from `from`.
pub fn mala_log_q(to: &DVector<f64>, from: &DVector<f64>, grad_from: &DVector<f64>, h: f64) -> f64 {
    let mut ss = 0.0;
    for i in 0..to.len() {
        let d = to[i] - from[i] - 0.5 * h * grad_from[i];
        ss += d * d;
    }
    -ss / (2.0 * h)
}

/// Log acceptance ratio of a Langevin proposal, including the asymmetric
/// forward and reverse proposal densities.
pub fn mala_log_ratio(
    current: &DVector<f64>,
    current_lp: f64,
    current_grad: &DVector<f64>,
    proposal: &DVector<f64>,
    proposal_lp: f64,
    proposal_grad: &DVector<f64>,
    h: f64,
) -> f64 {
    proposal_lp - current_lp + mala_log_q(current, proposal, proposal_grad, h)
        - mala_log_q(proposal, current, current_grad, h)
}

/// Metropolis-adjusted Langevin step. `eval` returns the log target, its
/// gradient and a payload at the proposal.
pub fn mala_step<R, S, F>(
    current: &DVector<f64>,
    current_lp: f64,
    current_grad: &DVector<f64>,
    h: f64,
    rng: &mut R,
    eval: F,
) -> StepOutcome<(DVector<f64>, S)>
where
    R: Rng + ?Sized,
    F: FnOnce(&DVector<f64>) -> Option<(f64, DVector<f64>, S)>,
{
    let z = DVector::from_iterator(
        current.len(),
        (0..current.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    let proposal = mala_proposal(current, current_grad, h, &z);
    let Some((lp, grad, payload)) = eval(&proposal) else {
        return StepOutcome::Failed;
    };
    let log_ratio = mala_log_ratio(current, current_lp, current_grad, &proposal, lp, &grad, h);
    if accept(log_ratio, rng) {
        StepOutcome::Accepted {
            state: proposal,
            log_target: lp,
            payload: (grad, payload),
        }
    } else {
        StepOutcome::Rejected
    }
}

/// `max(s + c₁ i^{−c₂} (α − 0.45), 1e-8)`.
pub fn adaptive_step_update(s_prev: f64, i: u64, alpha: f64, c1: f64, c2: f64) -> f64 {
    adaptive_step_update_towards(s_prev, i, alpha, c1, c2, TARGET_ACCEPT_THETA)
}

pub fn adaptive_step_update_towards(
    s_prev: f64,
    i: u64,
    alpha: f64,
    c1: f64,
    c2: f64,
    target: f64,
) -> f64 {
    let i = i.max(1) as f64;
    (s_prev + c1 * i.powf(-c2) * (alpha - target)).max(MIN_STEP)
}

/// Recommended Langevin step `1.65² / n^{1/3}` for an `n`-dimensional block.
pub fn default_mala_h(n: usize) -> f64 {
    1.65 * 1.65 / (n as f64).cbrt()
}
