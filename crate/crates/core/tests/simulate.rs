mod common;

use common::*;
use hetvar::selection::ModelIndex;
use hetvar::simulate::{
    classify_fit, mse, pps, replicate_study, simulate_hetero, PpsMode, SimulationSpec, StudyConfig,
};
use hetvar::{DesignData, VariationalFit};
use nalgebra::{DMatrix, DVector};

fn homo_spec(n: usize) -> SimulationSpec {
    SimulationSpec {
        alpha_tilde: vec![0.0; 8],
        sigma: 1.0,
        transform_to_unit: false,
        ..SimulationSpec::small_p(n, 1.0)
    }
}

/// Noise scaled back by the true standard deviation.
fn standardized_noise(spec: &SimulationSpec, d: &DesignData) -> Vec<f64> {
    let beta = spec.beta();
    (0..d.n())
        .map(|i| {
            let m: f64 = (0..beta.len()).map(|j| d.x[(i, j)] * beta[j]).sum();
            let xa: f64 = (0..spec.p()).map(|j| d.x[(i, j + 1)] * spec.alpha_tilde[j]).sum();
            (d.y[i] - m) / (spec.sigma * (0.5 * xa).exp())
        })
        .collect()
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn homoscedastic_residuals_have_unit_variance() {
    let spec = homo_spec(4000);
    let (train, _, _) = simulate_hetero(&spec, 1).unwrap();
    let e = standardized_noise(&spec, &train);
    assert!((variance(&e) - 1.0).abs() <= 3.0 / (train.n() as f64).sqrt());
}

#[test]
fn heteroscedastic_noise_matches_its_variance_function() {
    let spec = SimulationSpec { n_train: 100_000, n_valid: 1, ..SimulationSpec::small_p(1, 0.5) };
    let (train, _, _) = simulate_hetero(&spec, 2).unwrap();
    let e = standardized_noise(&spec, &train);
    let se = (2.0 / e.len() as f64).sqrt();
    assert!((variance(&e) - 1.0).abs() <= 3.0 * se, "{}", variance(&e));
}

#[test]
fn small_p_truth_and_zero_counts() {
    let spec = SimulationSpec::small_p(50, 0.5);
    let (train, _, truth) = simulate_hetero(&spec, 3).unwrap();
    assert_eq!(truth.mean_predictors(), vec![1, 2, 5]);
    assert_eq!(truth.var_predictors(), vec![2, 5]);
    let c = classify_fit(&truth, &truth);
    assert!(c.correct_mean && c.correct_var);
    assert_eq!((c.nzc_mean, c.nzc_var), (5, 6));
    let extra = truth.with_mean(3);
    let c = classify_fit(&extra, &truth);
    assert!(!c.correct_mean && c.correct_var);
    assert_eq!(c.nzc_mean, 4);
    assert!(train.x.iter().skip(train.n()).all(|v| *v > 0.0 && *v < 1.0));
}

#[test]
fn predictors_have_lag_one_correlation_one_half() {
    let spec = homo_spec(20_000);
    let (train, _, _) = simulate_hetero(&spec, 4).unwrap();
    let n = train.n() as f64;
    for j in 1..spec.p() {
        let a = train.x.column(j);
        let b = train.x.column(j + 1);
        let (ma, mb) = (a.mean(), b.mean());
        let cov = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
        let corr = cov / (a.variance().sqrt() * b.variance().sqrt());
        assert!((corr - 0.5).abs() <= 3.0 / n.sqrt(), "lag {j}: {corr}");
    }
}

#[test]
fn mse_examples() {
    let y = [1.0, -2.0, 0.5, 4.0];
    assert_eq!(mse(&y, &y).unwrap(), 0.0);
    let shifted: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
    assert!((mse(&shifted, &y).unwrap() - 1.0).abs() < 1e-15);
    let mut r = rng(5);
    let a: Vec<f64> = (0..30).map(|_| normal(&mut r)).collect();
    let b: Vec<f64> = (0..30).map(|_| normal(&mut r)).collect();
    let direct = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / 30.0;
    assert!((mse(&a, &b).unwrap() - direct).abs() < 1e-14);
    assert!(mse(&a, &b[..3]).is_err());
}

fn intercept_model(y: Vec<f64>) -> (DesignData, ModelIndex) {
    let n = y.len();
    let ones = DMatrix::from_element(n, 1, 1.0);
    let d = design_data(DVector::from_vec(y), ones.clone(), ones);
    let idx = ModelIndex::intercepts_only(&d);
    (d, idx)
}

fn scalar_fit(mu_b: f64, mu_a: f64) -> VariationalFit {
    VariationalFit {
        mu_beta: DVector::from_element(1, mu_b),
        sigma_beta: DMatrix::from_element(1, 1, 0.01),
        mu_alpha: DVector::from_element(1, mu_a),
        sigma_alpha: DMatrix::from_element(1, 1, 0.01),
        elbo: f64::NAN,
        iterations: 0,
        converged: true,
    }
}

#[test]
fn pps_examples() {
    let (d, idx) = intercept_model(vec![0.0]);
    let v = pps(&d, &idx, &scalar_fit(0.0, 0.0), PpsMode::PlugIn).unwrap();
    assert!((v - 0.918_938_533_204_672_7).abs() < 1e-12);

    // location-scale: y and mean scaled by s, log-variance shifted by 2 log s
    let y = vec![0.3, -1.1, 2.4, 0.9];
    let s: f64 = 3.0;
    let (d1, idx) = intercept_model(y.clone());
    let (d2, _) = intercept_model(y.iter().map(|v| v * s).collect());
    let a = pps(&d1, &idx, &scalar_fit(0.5, 0.2), PpsMode::PlugIn).unwrap();
    let b = pps(&d2, &idx, &scalar_fit(0.5 * s, 0.2 + 2.0 * s.ln()), PpsMode::PlugIn).unwrap();
    assert!((b - a - s.ln()).abs() < 1e-12);

    // direct recomputation
    let want: f64 = y
        .iter()
        .map(|v| 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.1 + 0.5 * (v - 0.5).powi(2) / 0.2f64.exp())
        .sum::<f64>()
        / 4.0;
    assert!((a - want).abs() < 1e-12);

    // integrated variant adds x^T Sigma x to the variance
    let c = pps(&d1, &idx, &scalar_fit(0.5, 0.2), PpsMode::IntegratedMean).unwrap();
    let want: f64 = y
        .iter()
        .map(|v| {
            let var = 0.2f64.exp() + 0.01;
            0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * var.ln() + 0.5 * (v - 0.5).powi(2) / var
        })
        .sum::<f64>()
        / 4.0;
    assert!((c - want).abs() < 1e-12);
}

#[test]
fn pps_of_standard_normal_data() {
    let mut r = rng(6);
    let n = 20_000;
    let (d, idx) = intercept_model((0..n).map(|_| normal(&mut r)).collect());
    let v = pps(&d, &idx, &scalar_fit(0.0, 0.0), PpsMode::PlugIn).unwrap();
    let want = 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5;
    assert!((v - want).abs() <= 3.0 / (n as f64).sqrt());
}

#[test]
fn single_replication_summary_and_determinism() {
    let spec = SimulationSpec::small_p(100, 0.5);
    let cfg = StudyConfig::default();
    let one = replicate_study(&spec, 1, &cfg, 9).unwrap();
    assert_eq!(one.replications, 1);
    let r = &one.records[0];
    assert!(r.error.is_none());
    assert_eq!(one.mse.mean, r.mse);
    assert_eq!(one.mse.sd, 0.0);
    assert_eq!(one.nzc_mean.mean, r.nzc_mean as f64);
    assert_eq!(one.cfr_mean, if r.correct_mean { 100.0 } else { 0.0 });

    let a = replicate_study(&spec, 4, &cfg, 21).unwrap();
    let b = replicate_study(&spec, 4, &cfg, 21).unwrap();
    assert_eq!(a, b);
    assert!(replicate_study(&spec, 0, &cfg, 21).is_err());
}

#[test]
fn simulation_is_seed_deterministic() {
    let spec = SimulationSpec::small_p(30, 0.5);
    let a = simulate_hetero(&spec, 77).unwrap();
    let b = simulate_hetero(&spec, 77).unwrap();
    assert_eq!(a.0.y, b.0.y);
    assert_eq!(a.1.x, b.1.x);
    let c = simulate_hetero(&spec, 78).unwrap();
    assert_ne!(a.0.y, c.0.y);
}
