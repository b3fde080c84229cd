use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ModelData;
use crate::error::{Error, Result};
use crate::fit::VariationalFit;
use crate::prior::PriorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Running mean and variance.
#[derive(Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn finish(&self) -> McEstimate {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        McEstimate { estimate: self.mean, stderr: (var / self.n).sqrt() }
    }
}

/// Multivariate normal with a precomputed Cholesky factor.
struct Gaussian {
    mean: DVector<f64>,
    lower: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, what: &str) -> Result<Self> {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
        let lower = chol.l();
        let logdet: f64 = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let d = mean.len() as f64;
        Ok(Self {
            mean: mean.clone(),
            precision: chol.inverse(),
            lower,
            log_norm: -0.5 * d * (2.0 * PI).ln() - 0.5 * logdet,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let e = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.lower * e
    }

    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        self.log_norm - 0.5 * d.dot(&(&self.precision * &d))
    }
}

fn check(data: &ModelData, prior: &PriorSpec, fit: &VariationalFit, n_samples: usize) -> Result<()> {
    if n_samples < 1000 {
        return Err(Error::InvalidData("Monte Carlo oracle needs at least 1000 samples".into()));
    }
    let (p, q) = (data.p(), data.q());
    if prior.p() != p || prior.q() != q || fit.p() != p || fit.q() != q {
        return Err(Error::Dimension("data, prior and fit disagree".into()));
    }
    Ok(())
}

fn log_likelihood(data: &ModelData, beta: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let mean = &data.x * beta;
    let logvar = &data.z * alpha;
    let c = -0.5 * (2.0 * PI).ln();
    (0..data.n())
        .map(|i| c - 0.5 * logvar[i] - 0.5 * (data.y[i] - mean[i]).powi(2) * (-logvar[i]).exp())
        .sum()
}

/// Draws `(beta, alpha)` from the two variational factors and calls `f` with
/// `(log prior, log likelihood, log q)` for each draw.
fn draw<F: FnMut(f64, f64, f64)>(
    data: &ModelData,
    prior: &PriorSpec,
    fit: &VariationalFit,
    n_samples: usize,
    seed: u64,
    mut f: F,
) -> Result<()> {
    check(data, prior, fit, n_samples)?;
    let pb = Gaussian::new(prior.mu_beta0(), prior.sigma_beta0(), "prior covariance of beta")?;
    let pa = Gaussian::new(prior.mu_alpha0(), prior.sigma_alpha0(), "prior covariance of alpha")?;
    let qb = Gaussian::new(&fit.mu_beta, &fit.sigma_beta, "variational covariance of beta")?;
    let qa = Gaussian::new(&fit.mu_alpha, &fit.sigma_alpha, "variational covariance of alpha")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let b = qb.sample(&mut rng);
        let a = qa.sample(&mut rng);
        f(pb.log_pdf(&b) + pa.log_pdf(&a), log_likelihood(data, &b, &a), qb.log_pdf(&b) + qa.log_pdf(&a));
    }
    Ok(())
}

/// Monte Carlo estimate of `E_q[log p(theta) + log p(y|theta) - log q(theta)]`.
pub fn mc_elbo_oracle(
    data: &ModelData,
    prior: &PriorSpec,
    fit: &VariationalFit,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let mut acc = Welford::default();
    draw(data, prior, fit, n_samples, seed, |lp, ll, lq| acc.push(lp + ll - lq))?;
    Ok(acc.finish())
}

/// Separate estimates of `E_q log p(theta)`, `E_q log p(y|theta)` and `-E_q log q(theta)`.
pub fn mc_elbo_terms(
    data: &ModelData,
    prior: &PriorSpec,
    fit: &VariationalFit,
    n_samples: usize,
    seed: u64,
) -> Result<[McEstimate; 3]> {
    let mut acc: [Welford; 3] = Default::default();
    draw(data, prior, fit, n_samples, seed, |lp, ll, lq| {
        acc[0].push(lp);
        acc[1].push(ll);
        acc[2].push(-lq);
    })?;
    Ok([acc[0].finish(), acc[1].finish(), acc[2].finish()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_data_at_prior_is_exactly_zero() {
        let d = ModelData::new(DVector::zeros(0), DMatrix::zeros(0, 1), DMatrix::zeros(0, 1)).unwrap();
        let prior = PriorSpec::isotropic(1, 1, crate::prior::IsotropicPrior::new(2.0, 3.0)).unwrap();
        let fit = VariationalFit::from_prior(&prior);
        let est = mc_elbo_oracle(&d, &prior, &fit, 2000, 1).unwrap();
        assert!(est.estimate.abs() < 1e-12 && est.stderr < 1e-12);
        assert!(mc_elbo_oracle(&d, &prior, &fit, 10, 1).is_err());
    }
}
