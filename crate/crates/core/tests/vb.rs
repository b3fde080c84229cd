mod common;

use common::*;
use hetvar::oracle::{finite_diff_grad, finite_diff_grad_richardson, grid_max_1d};
use hetvar::prior::log_inverse_gamma;
use hetvar::vb::{init_fit, newton_gamma_glm_mode, update_beta, update_hyper, PseudoResponses};
use hetvar::homoscedastic::update_alpha_scalar;
use hetvar::{elbo, fit_vb, fit_vb_full, IsotropicPrior, ModelData, PriorSpec, SolverConfig, VariationalFit};
use nalgebra::{DMatrix, DVector};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn with_mu_beta(fit: &VariationalFit, mu: &DVector<f64>) -> VariationalFit {
    VariationalFit { mu_beta: mu.clone(), ..fit.clone() }
}

#[test]
fn flat_prior_and_unit_weights_give_ols() {
    let d = random_model_data(5, 40, 3, 1);
    let prior = PriorSpec::new(
        DVector::zeros(3),
        DMatrix::identity(3, 3) * 1e8,
        DVector::zeros(1),
        DMatrix::identity(1, 1),
    )
    .unwrap();
    let mut fit = VariationalFit::from_prior(&prior);
    fit.mu_alpha = DVector::zeros(1);
    fit.sigma_alpha = DMatrix::from_element(1, 1, 1e-300);
    let (mu, _) = update_beta(&d, &prior, &fit, &cfg()).unwrap();
    let xtx = d.x.transpose() * &d.x;
    let ols = xtx.cholesky().unwrap().solve(&(d.x.transpose() * &d.y));
    for k in 0..3 {
        assert!((mu[k] - ols[k]).abs() <= 1e-5 * ols[k].abs().max(1e-3), "{mu} vs {ols}");
    }
}

#[test]
fn mean_update_is_stationary() {
    for seed in 0..5 {
        let d = random_model_data(40 + seed, 30, 3, 2);
        let prior = iso_prior(3, 2, 10.0);
        let fit = random_fit(50 + seed, 3, 2);
        let (mu, sigma) = update_beta(&d, &prior, &fit, &cfg()).unwrap();
        let before = elbo(&d, &prior, &fit, &cfg()).unwrap();
        let updated = VariationalFit { mu_beta: mu.clone(), sigma_beta: sigma, ..fit };
        let after = elbo(&d, &prior, &updated, &cfg()).unwrap();
        assert!(after >= before);
        let g = finite_diff_grad(|m| elbo(&d, &prior, &with_mu_beta(&updated, m), &cfg()).unwrap(), &mu, 1e-5);
        assert!(g.amax() <= 1e-6, "seed {seed}: {}", g.amax());
    }
}

#[test]
fn initial_log_variance_tracks_ols_residual_variance() {
    // log r^2 has mean log s2 + E log chi2_1 with E log chi2_1 = psi(1/2) + ln 2.
    let e_log_chi2 = -1.270_362_845_461_478;
    let sd_log_chi2 = std::f64::consts::PI / 2f64.sqrt();
    let n = 50;
    let mut hits = 0;
    for seed in 0..40 {
        let mut r = rng(700 + seed);
        let x = design_with_intercept(&mut r, n, 3);
        let y = DVector::from_fn(n, |i, _| 1.0 + x[(i, 1)] - x[(i, 2)] + 1.7 * normal(&mut r));
        let d = ModelData::new(y.clone(), x.clone(), DMatrix::from_element(n, 1, 1.0)).unwrap();
        let fit = init_fit(&d, &iso_prior(3, 1, 100.0), &cfg()).unwrap();
        let b = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
        let s2 = (&y - &x * b).norm_squared() / n as f64;
        let err = fit.mu_alpha[0] - (s2.ln() + e_log_chi2);
        hits += usize::from(err.abs() <= 3.0 * sd_log_chi2 / (n as f64).sqrt());
    }
    assert!(hits >= 38, "{hits}/40");
}

/// `-1/2 sum z a - 1/2 sum w exp(-z a) - (a - m)^2 / (2 s)` for scalar `a`.
fn gamma_log_density_1d(z: &[f64], w: &[f64], a: f64, m: f64, s: f64) -> f64 {
    let mut f = -(a - m).powi(2) / (2.0 * s);
    for i in 0..z.len() {
        f += -0.5 * z[i] * a - 0.5 * w[i] * (-z[i] * a).exp();
    }
    f
}

#[test]
fn newton_mode_matches_grid_in_one_dimension() {
    for seed in 0..10 {
        let mut r = rng(900 + seed);
        let n = 25;
        let z: Vec<f64> = (0..n).map(|_| 0.5 * normal(&mut r)).collect();
        let w: Vec<f64> = (0..n).map(|i| (0.8 * z[i] + 0.3 * normal(&mut r)).exp() * normal(&mut r).powi(2)).map(|v: f64| v.max(1e-6)).collect();
        let zm = DMatrix::from_column_slice(n, 1, &z);
        let wv = DVector::from_column_slice(&w);
        let (mode, info) = newton_gamma_glm_mode(
            &zm,
            &wv,
            &DVector::zeros(1),
            &DMatrix::from_element(1, 1, 0.1),
            &DVector::zeros(1),
            &cfg(),
        )
        .unwrap();
        assert!(info.converged && info.grad_norm <= 1e-8);
        let (g, _) = grid_max_1d(|a| gamma_log_density_1d(&z, &w, a, 0.0, 10.0), (-5.0, 5.0), 1e-4);
        assert!((mode[0] - g).abs() <= 1e-4, "seed {seed}: {} vs {g}", mode[0]);
    }
}

#[test]
fn hyper_update_maximizes_penalized_objective() {
    let d = random_model_data(77, 40, 3, 2);
    let iso = IsotropicPrior::new(5.0, 5.0).with_shrinkage(0.01, 0.01);
    let prior = PriorSpec::isotropic(3, 2, iso).unwrap();
    let (fit, _) = fit_vb(&d, &iso_prior(3, 2, 5.0), &cfg()).unwrap();
    let (s2b, s2a) = update_hyper(&fit, &prior).unwrap();
    let objective = |sb: f64, sa: f64| {
        let pr = PriorSpec::isotropic(3, 2, IsotropicPrior::new(sb, sa)).unwrap();
        elbo(&d, &pr, &fit, &cfg()).unwrap() + log_inverse_gamma(sb, 0.01, 0.01) + log_inverse_gamma(sa, 0.01, 0.01)
    };
    let (gb, _) = grid_max_1d(|lb| objective(lb.exp(), s2a), (-6.0, 6.0), 1e-3);
    let (ga, _) = grid_max_1d(|la| objective(s2b, la.exp()), (-6.0, 6.0), 1e-3);
    assert!((gb - s2b.ln()).abs() < 2e-3, "{} vs {}", gb.exp(), s2b);
    assert!((ga - s2a.ln()).abs() < 2e-3, "{} vs {}", ga.exp(), s2a);
}

#[test]
fn pinned_variance_gives_conjugate_posterior_mean() {
    let mut r = rng(12);
    let n = 30;
    let x = design_with_intercept(&mut r, n, 3);
    let y = DVector::from_fn(n, |i, _| 0.5 + 2.0 * x[(i, 1)] + normal(&mut r));
    let d = ModelData::new(y.clone(), x.clone(), DMatrix::from_element(n, 1, 1.0)).unwrap();
    let s2b = 4.0;
    let prior = PriorSpec::new(
        DVector::zeros(3),
        DMatrix::identity(3, 3) * s2b,
        DVector::zeros(1),
        DMatrix::from_element(1, 1, 1e-8),
    )
    .unwrap();
    let (fit, _) = fit_vb(&d, &prior, &cfg()).unwrap();
    // conjugate posterior given the fitted (essentially unit) noise precision
    let prec_noise = (-(fit.mu_alpha[0] - 0.5 * fit.sigma_alpha[(0, 0)])).exp();
    let a = x.transpose() * &x * prec_noise + DMatrix::identity(3, 3) / s2b;
    let want = a.clone().cholesky().unwrap().solve(&(x.transpose() * &y * prec_noise));
    assert!((&fit.mu_beta - &want).amax() <= 1e-8, "{} vs {want}", fit.mu_beta);
    let unit = (x.transpose() * &x + DMatrix::identity(3, 3) / s2b).cholesky().unwrap().solve(&(x.transpose() * &y));
    assert!((&fit.mu_beta - &unit).amax() <= 1e-5);
}

#[test]
fn traces_are_monotone_on_random_instances() {
    for seed in 0..100 {
        let (n, p, q) = (20 + (seed as usize * 7) % 80, 2 + seed as usize % 4, 1 + seed as usize % 3);
        let d = random_model_data(seed, n, p, q);
        let (_, trace) = fit_vb(&d, &iso_prior(p, q, 100.0), &cfg()).unwrap();
        assert!(trace.is_monotone(), "seed {seed}");
    }
}

#[test]
fn converged_fit_is_stationary_in_mean_and_covariance_scales() {
    for seed in 0..5 {
        let d = random_model_data(300 + seed, 60, 3, 2);
        let prior = iso_prior(3, 2, 100.0);
        let (fit, _) = fit_vb(&d, &prior, &cfg()).unwrap();
        assert!(fit.converged);
        let g = finite_diff_grad_richardson(|m| elbo(&d, &prior, &with_mu_beta(&fit, m), &cfg()).unwrap(), &fit.mu_beta, 1e-4);
        assert!(g.amax() <= 1e-5, "seed {seed}: mean grad {}", g.amax());
        let scaled = |t: &DVector<f64>| {
            let s = DMatrix::from_diagonal(&t.map(f64::exp));
            let f = VariationalFit { sigma_beta: &s * &fit.sigma_beta * &s, ..fit.clone() };
            elbo(&d, &prior, &f, &cfg()).unwrap()
        };
        let g = finite_diff_grad_richardson(scaled, &DVector::zeros(3), 1e-4);
        assert!(g.amax() <= 1e-5, "seed {seed}: scale grad {}", g.amax());
    }
}

#[test]
fn non_stationary_point_has_visible_gradient() {
    let d = random_model_data(9, 40, 2, 1);
    let prior = iso_prior(2, 1, 100.0);
    let (fit, _) = fit_vb(&d, &prior, &cfg()).unwrap();
    let off = &fit.mu_beta + DVector::from_element(2, 0.3);
    let g = finite_diff_grad(|m| elbo(&d, &prior, &with_mu_beta(&fit, m), &cfg()).unwrap(), &off, 1e-5);
    assert!(g.amax() > 1e-2);
}

#[test]
fn fits_are_bit_identical() {
    let d = random_model_data(4, 50, 4, 3);
    let prior = iso_prior(4, 3, 100.0);
    let (a, ta) = fit_vb(&d, &prior, &cfg()).unwrap();
    let (b, tb) = fit_vb(&d, &prior, &cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
}

#[test]
fn shrinkage_trace_is_monotone_and_records_hyper_values() {
    let d = random_model_data(61, 60, 4, 2);
    let iso = IsotropicPrior::new(100.0, 100.0).with_shrinkage(0.01, 0.01);
    let out = fit_vb_full(&d, &PriorSpec::isotropic(4, 2, iso).unwrap(), &cfg()).unwrap();
    assert!(out.trace.is_monotone());
    let hv = out.trace.hyper_values.unwrap();
    assert_eq!(hv.len(), out.trace.elbo_per_iteration.len());
    let fin = out.prior.isotropic_params().unwrap();
    assert_eq!(*hv.last().unwrap(), (fin.sigma2_beta, fin.sigma2_alpha));
}

#[test]
fn constant_variance_fit_agrees_with_scalar_fast_path() {
    let mut r = rng(18);
    let n = 80;
    let x = design_with_intercept(&mut r, n, 3);
    let y = DVector::from_fn(n, |i, _| 1.0 + x[(i, 1)] + 0.7 * normal(&mut r));
    let d = ModelData::new(y, x, DMatrix::from_element(n, 1, 1.0)).unwrap();
    let s2a = 100.0;
    let prior = iso_prior(3, 1, s2a);
    let config = SolverConfig { elbo_tol: 1e-12, ..cfg() };
    let (fit, _) = fit_vb(&d, &prior, &config).unwrap();
    let w = PseudoResponses::new(&d, &fit, &config).w;
    let scalar = update_alpha_scalar(w.sum(), s2a, n, true).unwrap();
    assert!((fit.mu_alpha[0] - scalar.mu_alpha_q).abs() <= 1e-6, "{} vs {}", fit.mu_alpha[0], scalar.mu_alpha_q);
}
