//! Logit link helpers.

use statrs::function::factorial::ln_binomial;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Inverse logit, kept strictly inside `(0, 1)`.
pub fn logistic(t: f64) -> f64 {
    let p = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `log C(n, y) + y t - n log(1 + e^t)`: binomial log pmf on the logit scale.
pub fn binomial_log_pmf(y: u64, n: u64, t: f64) -> f64 {
    ln_binomial(n, y) + y as f64 * t - n as f64 * softplus(t)
}
