//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use glgm::covariance::{covariance_from_distances, distance_matrix, CovarianceModel};
use glgm::link::logistic;
use glgm::mcmc::GeoModel;
use glgm::reparam::{PriorSpec, ProfileCenter};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random sites, a four-column design, totals and counts.
pub struct Instance {
    pub coords: Vec<[f64; 2]>,
    pub x: DMatrix<f64>,
    pub y: Vec<u64>,
    pub n: Vec<u64>,
}

pub fn random_instance(sites: usize, seed: u64) -> Instance {
    let mut r = rng(seed);
    let coords = (0..sites).map(|_| [r.random_range(0.0..40.0), r.random_range(0.0..40.0)]).collect();
    let x = DMatrix::from_fn(sites, 4, |_, j| if j == 0 { 1.0 } else { r.random_range(-1.5..1.5) });
    let n: Vec<u64> = (0..sites).map(|_| r.random_range(3..30)).collect();
    let y = n.iter().map(|&m| r.random_range(0..=m)).collect();
    Instance { coords, x, y, n }
}

pub fn geo_model(inst: &Instance) -> GeoModel {
    GeoModel::new(&inst.coords, &inst.x, &inst.y, &inst.n, &PriorSpec::default_for(4), 1.5).unwrap()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn dense_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs())).unwrap();
        m.swap_rows(c, piv);
        inv.swap_rows(c, piv);
        let d = m[(c, c)];
        for j in 0..n {
            m[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = m[(i, c)];
                if f != 0.0 {
                    for j in 0..n {
                        m[(i, j)] -= f * m[(c, j)];
                        inv[(i, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
    }
    inv
}

/// `Σ̃ = (Σ⁻¹ + Λ)⁻¹` and `Ω̃ = (Ω⁻¹ + Xᵀ(Σ⁻¹ − Σ⁻¹Σ̃Σ⁻¹)X)⁻¹` by explicit inverses.
pub fn conditioning_oracle(
    sigma: &DMatrix<f64>,
    x: &DMatrix<f64>,
    center: &ProfileCenter,
    omega: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let si = dense_inverse(sigma);
    let st = dense_inverse(&(&si + DMatrix::from_diagonal(&center.lambda_diag)));
    let middle = &si - &si * &st * &si;
    let ot = dense_inverse(&(dense_inverse(omega) + x.transpose() * middle * x));
    (st, ot)
}

pub fn covariance(coords: &[[f64; 2]], sigma2: f64, tau2: f64, phi: f64) -> DMatrix<f64> {
    let m = CovarianceModel::new(sigma2, tau2, phi, 1.5).unwrap();
    covariance_from_distances(&distance_matrix(coords), &m, true)
}

pub fn binomial_loglik(x: &DMatrix<f64>, y: &[u64], n: &[u64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    (0..y.len())
        .map(|i| {
            let p = logistic(eta[i]);
            y[i] as f64 * p.ln() + (n[i] - y[i]) as f64 * (1.0 - p).ln()
        })
        .sum()
}

/// Newton's method with a central-difference Hessian of `grad`, inverted by
/// Gauss-Jordan elimination. Halves the step until `f` does not decrease.
pub fn newton_fd<F, G>(f: F, grad: G, start: DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let p = start.len();
    let mut b = start;
    for _ in 0..200 {
        let g = grad(&b);
        if g.amax() < 1e-10 {
            break;
        }
        let h = DMatrix::from_fn(p, p, |i, j| {
            let mut a = b.clone();
            let mut c = b.clone();
            a[j] += 1e-5;
            c[j] -= 1e-5;
            (grad(&a)[i] - grad(&c)[i]) / 2e-5
        });
        let step = -(dense_inverse(&h) * &g);
        let mut t = 1.0;
        while f(&(&b + &step * t)) < f(&b) && t > 1e-10 {
            t *= 0.5;
        }
        b += step * t;
    }
    b
}

/// Score of the binomial log-likelihood, `Xᵀ(y − n p)`.
pub fn binomial_score(x: &DMatrix<f64>, y: &[u64], n: &[u64], beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let r = DVector::from_fn(y.len(), |i, _| y[i] as f64 - n[i] as f64 * logistic(eta[i]));
    x.transpose() * r
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

/// Mean and variance.
pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}
