#![allow(dead_code)]

use hetvar::{DesignData, ModelData, PriorSpec, IsotropicPrior, VariationalFit};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `n x k` design whose first column is ones and the rest standard normal.
pub fn design_with_intercept(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_element(n, k, 1.0);
    for i in 0..n {
        for j in 1..k {
            m[(i, j)] = normal(rng);
        }
    }
    m
}

/// Heteroscedastic data `y = X b + exp(Z a / 2) e` with intercept columns and
/// coefficients drawn uniformly in `[-scale, scale]`.
pub fn random_model_data(seed: u64, n: usize, p: usize, q: usize) -> ModelData {
    let mut r = rng(seed);
    let x = design_with_intercept(&mut r, n, p);
    let z = design_with_intercept(&mut r, n, q);
    let b = DVector::from_fn(p, |_, _| r.random_range(-2.0..2.0));
    let a = DVector::from_fn(q, |_, _| r.random_range(-0.8..0.8));
    let mean = &x * &b;
    let la = &z * &a;
    let y = DVector::from_fn(n, |i, _| mean[i] + (0.5 * la[i]).exp() * normal(&mut r));
    ModelData::new(y, x, z).unwrap()
}

pub fn iso_prior(p: usize, q: usize, s2: f64) -> PriorSpec {
    PriorSpec::isotropic(p, q, IsotropicPrior::new(s2, s2)).unwrap()
}

/// A random (not fitted) variational factor pair with SPD covariances.
pub fn random_fit(seed: u64, p: usize, q: usize) -> VariationalFit {
    let mut r = rng(seed);
    let spd = |r: &mut ChaCha8Rng, k: usize, s: f64| {
        let a = DMatrix::from_fn(k, k, |_, _| normal(r) * s);
        &a * a.transpose() + DMatrix::identity(k, k) * (0.05 * s)
    };
    VariationalFit {
        mu_beta: DVector::from_fn(p, |_, _| normal(&mut r)),
        sigma_beta: spd(&mut r, p, 0.2),
        mu_alpha: DVector::from_fn(q, |_, _| 0.3 * normal(&mut r)),
        sigma_alpha: spd(&mut r, q, 0.1),
        elbo: f64::NAN,
        iterations: 0,
        converged: false,
    }
}

/// Full design with intercepts at column 0 of both models and named columns.
pub fn design_data(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> DesignData {
    let mn = (0..x.ncols()).map(|j| if j == 0 { "(Intercept)".to_string() } else { format!("x{j}") }).collect();
    let vn = (0..z.ncols()).map(|j| if j == 0 { "(Intercept)".to_string() } else { format!("x{j}") }).collect();
    DesignData::new(y, x, z, mn, vn, Some(0), Some(0)).unwrap()
}

/// `p - 1` standard-normal predictors shared by both models; `y` from the
/// given coefficients (full length, intercept first).
pub fn planted(seed: u64, n: usize, beta: &[f64], alpha: &[f64]) -> DesignData {
    assert_eq!(beta.len(), alpha.len());
    let mut r = rng(seed);
    let x = design_with_intercept(&mut r, n, beta.len());
    let b = DVector::from_column_slice(beta);
    let a = DVector::from_column_slice(alpha);
    let mean = &x * &b;
    let la = &x * &a;
    let y = DVector::from_fn(n, |i, _| mean[i] + (0.5 * la[i]).exp() * normal(&mut r));
    design_data(y, x.clone(), x)
}
