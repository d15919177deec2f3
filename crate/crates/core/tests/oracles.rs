mod common;

use common::*;
use glgm::covariance::{matern_bessel, matern_correlation, CovMatrix};
use glgm::glm::{deviance, irls_fit};
use glgm::reparam::{
    conditioning_matrices, conditioning_from, profile_center, theta_to_tilde, tilde_to_theta, unwhiten, whiten,
    PriorSpec, Theta, TransformedState,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn matern_half_integer_orders_have_closed_forms() {
    for k in 0..100 {
        let u = 10f64.powf(-3.0 + 5.0 * k as f64 / 99.0);
        let e = (-u).exp();
        for (kappa, exact) in [(0.5, e), (1.5, (1.0 + u) * e), (2.5, (1.0 + u + u * u / 3.0) * e)] {
            let got = matern_correlation(u, 1.0, kappa).unwrap();
            assert!((got - exact).abs() < 1e-10, "κ={kappa} u={u}: {got} vs {exact}");
        }
    }
}

#[test]
fn generic_bessel_path_agrees_with_closed_forms() {
    for k in 0..50 {
        let u = 10f64.powf(-2.0 + 3.5 * k as f64 / 49.0);
        let e = (-u).exp();
        assert!((matern_bessel(u, 1.5) - (1.0 + u) * e).abs() < 1e-11);
        assert!((matern_bessel(u, 2.5) - (1.0 + u + u * u / 3.0) * e).abs() < 1e-11);
    }
}

#[test]
fn t_gradient_matches_central_differences() {
    let mut r = rng(20);
    for trial in 0..20 {
        let inst = random_instance(12, 100 + trial);
        let model = geo_model(&inst);
        let state = TransformedState {
            t_tilde: DVector::from_fn(12, |_, _| r.sample(StandardNormal)),
            beta_tilde: DVector::from_fn(4, |_, _| r.sample(StandardNormal)),
            theta_tilde: [r.random_range(-1.0..0.5), r.random_range(-6.0..-2.0), r.random_range(-1.5..0.5)],
        };
        let ctx = model.theta_context(state.theta_tilde).unwrap();
        let g = model.grad_log_target_t_tilde(&state).unwrap();
        let fd = central_gradient(
            |t| model.evaluate(&ctx, &state.beta_tilde, t).log_target,
            &state.t_tilde,
            1e-5,
        );
        let rel = (&g - &fd).norm() / fd.norm();
        assert!(rel < 1e-5, "trial {trial}: relative error {rel}");
    }
}

#[test]
fn gradient_vanishes_at_conditional_mode() {
    let inst = random_instance(8, 3);
    let model = geo_model(&inst);
    let ctx = model.theta_context([-0.3, -4.0, -0.5]).unwrap();
    let beta_tilde = DVector::from_vec(vec![0.2, -0.1, 0.4, 0.0]);
    let mut t = DVector::zeros(8);
    // Newton on t̃ with a finite-difference Hessian of the analytic gradient.
    for _ in 0..50 {
        let (_, g) = model.evaluate_with_grad(&ctx, &beta_tilde, &t);
        if g.norm() < 1e-10 {
            break;
        }
        let h = DMatrix::from_fn(8, 8, |i, j| {
            let mut a = t.clone();
            let mut b = t.clone();
            a[j] += 1e-6;
            b[j] -= 1e-6;
            (model.evaluate_with_grad(&ctx, &beta_tilde, &a).1[i] - model.evaluate_with_grad(&ctx, &beta_tilde, &b).1[i])
                / 2e-6
        });
        t -= h.lu().solve(&g).unwrap();
    }
    assert!(model.evaluate_with_grad(&ctx, &beta_tilde, &t).1.norm() < 1e-6);
}

#[test]
fn whitening_and_theta_map_round_trip() {
    let mut r = rng(7);
    let prior = PriorSpec::default_for(4);
    for k in 0..100 {
        let inst = random_instance(6, 500 + k);
        let theta = Theta {
            sigma: r.random_range(0.2..3.0),
            tau: r.random_range(0.2..3.0),
            phi: r.random_range(2.0..60.0),
        };
        let back = tilde_to_theta(&theta_to_tilde(&theta, 1.5).unwrap(), 1.5);
        for (a, b) in [(theta.sigma, back.sigma), (theta.tau, back.tau), (theta.phi, back.phi)] {
            assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
        let cov = CovMatrix::new(covariance(&inst.coords, theta.sigma.powi(2), theta.tau.powi(2), theta.phi));
        let cm = conditioning_matrices(&cov, &inst.x, &profile_center(&inst.y, &inst.n).unwrap(), &prior).unwrap();
        let t = DVector::from_fn(6, |_, _| r.random_range(-3.0..3.0));
        let beta = DVector::from_fn(4, |_, _| r.random_range(-2.0..2.0));
        let s = whiten(&t, &beta, &theta, 1.5, &cm).unwrap();
        let (t2, b2, _) = unwhiten(&s, 1.5, &cm).unwrap();
        assert!((&t - t2).amax() < 1e-10 && (&beta - b2).amax() < 1e-10);
        let s2 = whiten(&unwhiten(&s, 1.5, &cm).unwrap().0, &beta, &theta, 1.5, &cm).unwrap();
        assert!((&s.t_tilde - s2.t_tilde).amax() < 1e-10);
    }
}

#[test]
fn conditioning_matrices_match_dense_inverses() {
    let mut r = rng(8);
    for k in 0..10 {
        let inst = random_instance(5, 900 + k);
        let mut prior = PriorSpec::default_for(4);
        prior.omega = DMatrix::from_diagonal(&DVector::from_fn(4, |_, _| r.random_range(1.0..30.0)));
        let sigma = covariance(&inst.coords, r.random_range(0.1..2.0), r.random_range(0.1..2.0), r.random_range(3.0..40.0));
        let center = profile_center(&inst.y, &inst.n).unwrap();
        let cm = conditioning_from(&sigma, &inst.x, &center, &prior.prepare().unwrap()).unwrap();
        let (st, ot) = conditioning_oracle(&sigma, &inst.x, &center, &prior.omega);
        let scale = |m: &DMatrix<f64>| m.amax().max(1.0);
        assert!((&cm.sigma_tilde - &st).amax() / scale(&st) < 1e-8);
        assert!((&cm.omega_tilde - &ot).amax() / scale(&ot) < 1e-8);
    }
}

#[test]
fn irls_matches_finite_difference_newton_and_deviance_decreases() {
    for k in 0..10 {
        let inst = random_instance(40, 1300 + k);
        let fit = irls_fit(&inst.x, &inst.y, &inst.n).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnostics);
        let brute = newton_fd(
            |b| binomial_loglik(&inst.x, &inst.y, &inst.n, b),
            |b| binomial_score(&inst.x, &inst.y, &inst.n, b),
            DVector::zeros(4),
        );
        assert!((&fit.beta_hat - &brute).amax() < 1e-4, "{} vs {}", fit.beta_hat, brute);
        assert!(fit.deviance_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let d = deviance(&inst.x, &inst.y, &inst.n, &fit.beta_hat);
        assert!((d - fit.deviance).abs() < 1e-9);
    }
}

#[test]
fn irls_optimum_beats_a_surrounding_grid() {
    let mut r = rng(40);
    let x = DMatrix::from_fn(20, 2, |_, j| if j == 0 { 1.0 } else { r.random_range(-2.0..2.0) });
    let n: Vec<u64> = (0..20).map(|_| r.random_range(5..25)).collect();
    let y: Vec<u64> = n.iter().map(|&m| r.random_range(0..=m)).collect();
    let fit = irls_fit(&x, &y, &n).unwrap();
    let best = binomial_loglik(&x, &y, &n, &fit.beta_hat);
    for i in 0..200 {
        for j in 0..200 {
            let b = DVector::from_vec(vec![
                fit.beta_hat[0] - 1.0 + 2.0 * i as f64 / 199.0,
                fit.beta_hat[1] - 1.0 + 2.0 * j as f64 / 199.0,
            ]);
            assert!(binomial_loglik(&x, &y, &n, &b) <= best + 1e-9);
        }
    }
}
